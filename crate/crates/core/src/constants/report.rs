use super::{ErgodicScalars, LsaConstants, MatrixData, StabilityConstants, TdConstants, WindowDrift};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Auditable record of constant evaluations: echoed inputs, named values and warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstantsReport {
    pub inputs: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.17e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn json_num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or_else(|| Value::String(fmt_num(v)))
}

impl ConstantsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, name: &str, v: f64) -> &mut Self {
        self.inputs.insert(name.to_string(), v);
        self
    }

    pub fn value(&mut self, name: &str, v: f64) -> &mut Self {
        self.values.insert(name.to_string(), v);
        self
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn add_matrix(&mut self, m: &MatrixData) {
        self.input("d", m.d as f64)
            .input("a", m.a)
            .input("kappa_Q", m.kappa_q)
            .input("norm_A", m.norm_a)
            .input("norm_A_Q", m.norm_a_q)
            .input("norm_Q", m.norm_q);
    }

    pub fn add_certificate(&mut self, c: &crate::chains::DriftCertificate) {
        self.input("c", c.c).input("b", c.b).input("delta", c.delta).input("R0", c.r0);
        if let Some(e) = c.ergodicity {
            self.input("B_V", e.b_v).input("rho", e.rho);
        }
    }

    pub fn add_scalars(&mut self, s: &ErgodicScalars) {
        self.value("lambda", s.lambda).value("b_tilde", s.b_tilde).value("b_prime", s.b_prime);
        for w in &s.warnings {
            self.warn(w.clone());
        }
    }

    /// Adds stability constants with names suffixed by the moment order.
    pub fn add_stability(&mut self, st: &StabilityConstants) {
        self.add_scalars(&st.scalars);
        let sfx = |n: &str| format!("{n}_p{}", st.p);
        self.value("C0", st.c0).value("C1", st.c1).value("r_A", st.r_a);
        self.value(&sfx("p_tilde"), st.p_tilde)
            .value(&sfx("C_f"), st.rosenthal.c_f)
            .value(&sfx("C_W"), st.rosenthal.c_w)
            .value(&sfx("C_ros"), st.rosenthal.c_ros)
            .value(&sfx("C2"), st.c2p)
            .value(&sfx("h"), st.h)
            .value(&sfx("log_alpha_inf"), st.log_alpha_inf)
            .value(&sfx("alpha_inf"), st.alpha_inf)
            .value(&sfx("C_st"), st.c_st);
        for w in &st.warnings {
            self.warn(w.clone());
        }
    }

    pub fn add_lsa(&mut self, c: &LsaConstants) {
        self.add_stability(&c.stability_2p);
        self.value("log_alpha_inf0", c.log_alpha_inf0)
            .value("alpha_inf0", c.alpha_inf0)
            .value("log_alpha_inf1", c.log_alpha_inf1)
            .value("alpha_inf1", c.alpha_inf1)
            .value("CbarA", c.cbar_a)
            .value("Cbarb", c.cbar_b)
            .value("CbarEps", c.cbar_eps)
            .value("C_eps", c.c_eps)
            .value("D_ros_p", c.d_ros_p)
            .value("D_ros_4p", c.d_ros_4p)
            .value("ConstJ0", c.const_j0)
            .value("ConstJ0_4p", c.const_j0_4p)
            .value("ConstH0", c.const_h0);
        if let Some(t) = &c.separation {
            self.value("ConstS", t.const_s)
                .value("ConstB", t.const_b)
                .value("Const1", t.const_1)
                .value("Const2", t.const_2)
                .value("Const3", t.const_3)
                .value("Const4", t.const_4)
                .value("Const5", t.const_5)
                .value("ConstJ1f", t.const_j1f)
                .value("ConstJ1d", t.const_j1d)
                .value("ConstH1f", t.const_h1f)
                .value("ConstH1d", t.const_h1d)
                .value("Cf", t.cf)
                .value("Cd", t.cd);
        }
        for w in &c.warnings {
            self.warn(w.clone());
        }
    }

    pub fn add_window(&mut self, w: &WindowDrift) {
        let sfx = |n: &str| format!("{n}_tau{}", w.tau);
        self.value(&sfx("beta0"), w.beta0)
            .value(&sfx("c0"), w.c0)
            .value(&sfx("c_tilde"), w.c_tilde)
            .value(&sfx("cP"), w.c_p)
            .value(&sfx("R1"), w.r1)
            .value(&sfx("R2"), w.r2)
            .value(&sfx("RP"), w.r_p)
            .value(&sfx("bP"), w.b_p);
        for w in &w.warnings {
            self.warn(w.clone());
        }
    }

    pub fn add_td(&mut self, t: &TdConstants) {
        self.add_window(&t.window);
        self.value("CbarA_td", t.cbar_a).value("CbarbK_td", t.cbar_bk);
    }

    /// Values that are neither finite nor mentioned in a warning.
    pub fn unflagged_non_finite(&self) -> Vec<&str> {
        if !self.warnings.is_empty() {
            return Vec::new();
        }
        self.values.iter().filter(|(_, v)| !v.is_finite()).map(|(k, _)| k.as_str()).collect()
    }

    /// Flat `section.name=value` lines, inputs first.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.inputs {
            let _ = writeln!(out, "input.{k}={}", fmt_num(*v));
        }
        for (k, v) in &self.values {
            let _ = writeln!(out, "value.{k}={}", fmt_num(*v));
        }
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(out, "warning.{i}={w}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let section = |m: &BTreeMap<String, f64>| {
            Value::Object(m.iter().map(|(k, v)| (k.clone(), json_num(*v))).collect::<Map<_, _>>())
        };
        let mut root = Map::new();
        root.insert("inputs".into(), section(&self.inputs));
        root.insert("values".into(), section(&self.values));
        root.insert("warnings".into(), Value::from(self.warnings.clone()));
        serde_json::to_string_pretty(&Value::Object(root)).expect("report serialises")
    }
}
