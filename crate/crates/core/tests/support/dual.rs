//! Second, separately written evaluator of the constants chain.
//!
//! Results are keyed exactly like `ConstantsReport::values` so the two can be
//! compared name by name.

use lsa_lab::chains::{DriftCertificate, SuperlevelInf};
use lsa_lab::constants::MatrixData;
use std::collections::BTreeMap;
use std::f64::consts::{E, LN_2, PI};

pub type Values = BTreeMap<String, f64>;

pub struct Primitives<'a> {
    pub cert: &'a DriftCertificate,
    pub matrix: &'a MatrixData,
    pub beta: f64,
    pub c_a: f64,
    pub epsilon: f64,
    pub m: f64,
}

pub struct LsaPrimitives {
    pub k: f64,
    pub c_bk: f64,
    pub theta_star_norm: f64,
    pub b_norm: f64,
    pub c_alpha: f64,
}

fn lambda(cert: &DriftCertificate) -> f64 {
    let level = match cert.superlevel_inf {
        SuperlevelInf::Empty => 1.0,
        SuperlevelInf::At(w) => if w < 1.0 { 1.0 } else { w },
    };
    (-(cert.c * level.powf(cert.delta))).exp()
}

/// Closed form `(1 − δ) δ^{δ/(1−δ)} c^{1/(1−δ)}` of `sup_r (c r^δ − r)`.
fn gap(c: f64, delta: f64) -> f64 {
    if delta == 1.0 {
        if c > 1.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        let e = 1.0 / (1.0 - delta);
        (1.0 - delta) * delta.powf(delta * e) * c.powf(e)
    }
}

/// `(R_γ, c_γ, b_γ)`.
fn poly(cert: &DriftCertificate, gamma: f64) -> (f64, f64, f64) {
    let (c, d, b, r0) = (cert.c, cert.delta, cert.b, cert.r0);
    let expo = 1.0 + gamma - d;
    if gamma > d {
        let mut radius = r0;
        radius = radius.max((2.0 * expo / c).powf(1.0 / d));
        let third = if d == 1.0 {
            match c.partial_cmp(&1.0).unwrap() {
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Greater => f64::INFINITY,
            }
        } else {
            (1.0 / c).powf(1.0 / (1.0 - d))
        };
        radius = radius.max(third);
        let e = (gamma - d).exp();
        let base = if (b + e).ln() > radius + e { (b + e).ln() } else { radius + e };
        let inner = 1.0 - 0.5 * c / radius.powf(1.0 - d);
        let cg = expo * inner.powf(gamma - d) * 0.5 * c;
        (radius, if cg < 1.0 { cg } else { 1.0 }, base.powf(expo))
    } else {
        let lb = if b > 1.0 { b.ln() } else { 0.0 };
        let cg = expo * c;
        (r0, if cg < 1.0 { cg } else { 1.0 }, lb.powf(expo))
    }
}

fn small(cert: &DriftCertificate, radius: f64) -> (f64, f64) {
    let (m, eps) = cert.small_sets.as_ref().and_then(|s| s.lookup(radius)).expect("small set available");
    (m as f64, eps)
}

fn psi(cert: &DriftCertificate, gamma: f64, gt: f64) -> f64 {
    let (rg, cg, bg) = poly(cert, gt);
    let rt = {
        let x = (2.0 * bg / cg).powf(1.0 / gt);
        if x > rg {
            x
        } else {
            rg
        }
    };
    let (m, eps) = small(cert, rt);
    let (_, c2, b2) = poly(cert, gt + 1.0 - cert.delta);
    let first = 8.0 * eps * (m * bg / cg + rt.powf(gamma + 1.0 - cert.delta));
    first + 2.0 * (1.0 + b2 / c2)
}

/// `(C_f, C_W, C_ros)` at exponent `p` for `f ≤ W^γ`.
fn rosenthal(cert: &DriftCertificate, p: f64, gamma: f64) -> (f64, f64, f64) {
    let top = p * (gamma + 1.0 - cert.delta);
    let cf = psi(cert, gamma, gamma);
    let cw = psi(cert, gamma, top);
    let (_, cg, _) = poly(cert, gamma);
    let (_, ct, bt) = poly(cert, top);
    let pi_w = bt / ct / cg.powf(p);
    let num = (6.0 * cf).powf(p) * (cw + pi_w) * (p.powf(p) + 2.0);
    (cf, cw, num / cg / ct)
}

fn phi(cert: &DriftCertificate, tau: f64) -> f64 {
    let lam = lambda(cert);
    let one_minus = 1.0 - lam.powf(1.0 / tau);
    let radius = {
        let r = (2f64.powf(tau) * cert.b / one_minus.powf(tau)).ln();
        let l0 = cert.r0.ln();
        if l0 > r {
            l0
        } else {
            r
        }
    };
    let (m, eps) = small(cert, radius);
    let q = cert.b.powf(1.0 / tau) / one_minus;
    8.0 * eps * q * (m + 2.0) + 2.0 * (1.0 + cert.b / (1.0 - lam))
}

fn d_ros(cert: &DriftCertificate, p: f64) -> f64 {
    let lam = lambda(cert);
    let pi_v = cert.b / (1.0 - lam);
    (6.0 * phi(cert, p)).powf(p) * (phi(cert, 1.0) + pi_v) * (p.powf(p) + 2.0)
        / (1.0 - lam)
        / (1.0 - lam.powf(1.0 / p))
}

/// Stability constants at order `p`; returns the values and `(ln α∞, C_st)`.
pub fn stability(pr: &Primitives, p: f64, out: &mut Values) -> (f64, f64) {
    let cert = pr.cert;
    let md = pr.matrix;
    let lam = lambda(cert);
    let sup = gap(cert.c, cert.delta);
    let b_tilde = cert.b.ln() + sup;
    let b_prime = cert.b.ln() - (1.0 - lam).ln() + sup;
    let d = md.d as f64;
    let sk = md.kappa_q.sqrt();
    let c0 = sk * md.norm_a * md.norm_a * (md.norm_a + md.a).exp() / 2.0;
    let c1 = (sk * d * md.a.exp() * pr.c_a).powf(1.0 + pr.epsilon) / (1.0 + pr.epsilon);
    let r_a = if cert.delta == 1.0 { 0.0 } else { (1.0 - cert.delta) / (2.0 * cert.delta - 1.0 - pr.beta) };
    let p_tilde = if r_a / 4.0 > p { r_a / 4.0 } else { p };
    let (cf, cw, cros) = rosenthal(cert, 4.0 * p_tilde, pr.beta);
    let c2 = sk * md.a.exp() * d * pr.c_a * (4.0 * cros).powf(0.25 / p_tilde);
    let x = 12.0 * c2 * (b_tilde - (1.0 - lam).ln()) / md.a;
    let h = (x * x).ceil().max(1.0);

    let ln_c = |v: f64| v.ln();
    let terms = [
        -ln_c(md.a),
        -ln_c(h),
        -(ln_c(2.0) + 2.0 * ln_c(md.norm_a_q) + ln_c(md.norm_q)),
        ln_c(md.a) - ln_c(12.0) - ln_c(h) - ln_c(c0),
        (ln_c(md.a) - ln_c(12.0) - ln_c(c1) - h * LN_2) / pr.epsilon,
        (ln_c(cert.c.min(0.5)) - ln_c(2.0) - ln_c(p) - ln_c(c1) - h * LN_2) / (1.0 + pr.epsilon),
        ln_c(cert.c.min(1.0)) - ln_c(4.0) - ln_c(p) - ln_c(c2) - 0.5 * ln_c(h),
    ];
    let mut la = f64::INFINITY;
    for t in terms {
        if t < la {
            la = t;
        }
    }
    let alpha_h = if h == f64::INFINITY || la + h.ln() < -745.0 { 0.0 } else { (la + h.ln()).exp() };
    let c_st = sk * (1.25 * md.a * alpha_h).exp() * (lam.powf(pr.m / (2.0 * p)) + (cert.b / (1.0 - lam)).powf(0.5 / p));

    let mut put = |k: &str, v: f64| {
        out.insert(k.to_string(), v);
    };
    put("lambda", lam);
    put("b_tilde", b_tilde);
    put("b_prime", b_prime);
    put("C0", c0);
    put("C1", c1);
    put("r_A", r_a);
    put(&format!("p_tilde_p{p}"), p_tilde);
    put(&format!("C_f_p{p}"), cf);
    put(&format!("C_W_p{p}"), cw);
    put(&format!("C_ros_p{p}"), cros);
    put(&format!("C2_p{p}"), c2);
    put(&format!("h_p{p}"), h);
    put(&format!("log_alpha_inf_p{p}"), la);
    put(&format!("alpha_inf_p{p}"), la.exp());
    put(&format!("C_st_p{p}"), c_st);
    (la, c_st)
}

/// LSA constants at order `p` (stability evaluated at `2p`).
pub fn lsa(pr: &Primitives, lp: &LsaPrimitives, p: f64, out: &mut Values) {
    let cert = pr.cert;
    let md = pr.matrix;
    let erg = cert.ergodicity.expect("ergodicity constants");
    let (la2, c_st) = stability(pr, 2.0 * p, out);
    let lam = lambda(cert);
    let d = md.d as f64;
    let a = md.a;

    let la0 = la2.min(erg.rho.ln()).min(-1.0);
    let la1 = if lp.c_alpha > 0.0 { la0.min(-(2.0 * lp.c_alpha).ln()) } else { la0 };
    let growth = if pr.beta == 0.0 { 1.0 } else { (pr.beta * lp.k / E).powf(pr.beta) };
    let vm = (1.0 + cert.b / (1.0 - lam)).powf(1.0 / lp.k);
    let cbar_a = md.norm_a + d * pr.c_a * growth * vm;
    let cbar_b = lp.b_norm + d * lp.c_bk * vm;
    let cbar_eps = lp.theta_star_norm * cbar_a + cbar_b;
    let c_eps = d.sqrt() * lp.c_bk + 2.0 * d * growth * pr.c_a * lp.theta_star_norm;
    let dp = d_ros(cert, p);
    let d4p = d_ros(cert, 4.0 * p);
    let sk = md.kappa_q.sqrt();
    let bracket = 2.0 + 4.0 * (lp.c_alpha + 2.0 * md.norm_a) / a + 2.0 / a.sqrt();
    let j0 = d * sk * c_eps * bracket * dp.powf(1.0 / p);
    let j0_4p = d * sk * c_eps * bracket * d4p.powf(0.25 / p);
    let alpha1 = la1.exp();
    let h0 = 16.0 * (1.0 + lp.c_alpha * alpha1).sqrt() * c_st * j0_4p * cbar_a / a;

    let mut put = |k: &str, v: f64| {
        out.insert(k.to_string(), v);
    };
    put("log_alpha_inf0", la0);
    put("alpha_inf0", la0.exp());
    put("log_alpha_inf1", la1);
    put("alpha_inf1", alpha1);
    put("CbarA", cbar_a);
    put("Cbarb", cbar_b);
    put("CbarEps", cbar_eps);
    put("C_eps", c_eps);
    put("D_ros_p", dp);
    put("D_ros_4p", d4p);
    put("ConstJ0", j0);
    put("ConstJ0_4p", j0_4p);
    put("ConstH0", h0);

    if lp.k >= 32.0 && 16.0 * p <= lp.k {
        let s = 24.0 * md.kappa_q * d * dp.powf(1.0 / p) * (pr.c_a + md.norm_a) * md.norm_a;
        let b = d * d.sqrt()
            * (2.0 * erg.b_v * c_eps / (1.0 - erg.rho).sqrt() + 36.0 * 2f64.sqrt() * p * cbar_eps);
        let k1 = 8.0 * cbar_eps * s * sk / (a * a);
        let k2 = 4.0 * b * s * sk / a;
        let k3 = 8.0 * sk * s * cbar_eps * erg.b_v.powf(0.25 / p) / a;
        let k4 = 2.0 * k1 + 2.0 * E.sqrt() * k2 / a + (2.0 * PI).sqrt() * E * k3 / (a * a.sqrt());
        let k5 = (1.0 + lp.c_alpha.sqrt()) * (3.0 * k1 + 2.0 * k2 / a.sqrt() + 4.0 * k3 / a);
        let log_inv = (1.0 / erg.rho).ln();
        let j1f = 2.0 * p.sqrt() * k4 / log_inv.sqrt();
        let j1d = 2.0 * p.sqrt() * k5 / log_inv;
        let h1f = 8.0 * j1f * cbar_a * c_st / a;
        let h1d = 16.0 * j1d * cbar_a * c_st * (1.0 + lp.c_alpha * alpha1) / a;
        put("ConstS", s);
        put("ConstB", b);
        put("Const1", k1);
        put("Const2", k2);
        put("Const3", k3);
        put("Const4", k4);
        put("Const5", k5);
        put("ConstJ1f", j1f);
        put("ConstJ1d", j1d);
        put("ConstH1f", h1f);
        put("ConstH1d", h1d);
        put("Cf", h1f + j1f);
        put("Cd", h1d + j1d);
    }
}

/// Root of a decreasing function on `[lo, hi]` by the Illinois variant of false position.
fn falsi(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let (mut flo, mut fhi) = (f(lo), f(hi));
    let mut side = 0;
    for _ in 0..500 {
        let x = (lo * fhi - hi * flo) / (fhi - flo);
        let fx = f(x);
        if fx == 0.0 || (hi - lo).abs() <= 4.0 * f64::EPSILON * hi.abs() {
            return x;
        }
        if (fx > 0.0) == (flo > 0.0) {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi /= 2.0;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo /= 2.0;
            }
            side = 1;
        }
    }
    0.5 * (lo + hi)
}

/// Window-chain drift constants for window length `tau`.
pub fn window(cert: &DriftCertificate, tau: usize, out: &mut Values) {
    let t = tau as f64;
    let (c, d, b) = (cert.c, cert.delta, cert.b);
    let cond = |beta: f64| (1.0 - t * beta) * (t * beta * c).powf(d) - beta;
    let left = 1.0 / (2.0 * t);
    let beta0 = if cond(left) <= 0.0 { left } else { falsi(cond, left, 1.0 / t) };
    let c0 = c * beta0;
    let ct = c * (1.0 - t * beta0);
    let k = ct + t * c0;
    let r1 = if b < 1.0 {
        0.0
    } else if d == 1.0 {
        if k < 1.0 {
            b.ln() / (1.0 - k)
        } else {
            f64::INFINITY
        }
    } else {
        // Newton from the right on the convex function r − k r^δ − ln b
        let f = |r: f64| r - k * r.powf(d) - b.ln();
        let df = |r: f64| 1.0 - k * d * r.powf(d - 1.0);
        let mut r = 1.0;
        while !(f(r) > 0.0 && df(r) > 0.0) {
            r *= 2.0;
        }
        for _ in 0..200 {
            let next = r - f(r) / df(r);
            if (r - next).abs() <= 1e-16 * r {
                r = next;
                break;
            }
            r = next;
        }
        r
    };
    let r2 = (2.0 * LN_2 / ct).powf(1.0 / d);
    let rp = if r1 > r2 { r1 } else { r2 };
    let g = |r: f64| (r - ct * r.powf(d)).exp() + b * (beta0 * c * r.powf(d)).exp();
    let bp = if rp.is_finite() {
        let n = 4096;
        let step = rp / n as f64;
        let (mut best_i, mut best) = (0usize, g(0.0));
        for i in 1..=n {
            let v = g(i as f64 * step);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let (mut lo, mut hi) = ((best_i.max(1) - 1) as f64 * step, ((best_i + 1).min(n)) as f64 * step);
        while hi - lo > 1e-13 * rp.max(1.0) {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if g(m1) < g(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        best.max(g(0.5 * (lo + hi))).max(g(rp))
    } else {
        f64::INFINITY
    };
    let mut put = |name: &str, v: f64| {
        out.insert(format!("{name}_tau{tau}"), v);
    };
    put("beta0", beta0);
    put("c0", c0);
    put("c_tilde", ct);
    put("cP", ct / 2.0);
    put("R1", r1);
    put("R2", r2);
    put("RP", rp);
    put("bP", bp);
}

#[allow(clippy::too_many_arguments)]
pub fn td(
    cert: &DriftCertificate,
    tau: usize,
    gamma: f64,
    lambda_trace: f64,
    c_psi: f64,
    c_rk: f64,
    beta: f64,
    k: f64,
    out: &mut Values,
) {
    window(cert, tau, out);
    let denom = 1.0 - gamma * lambda_trace;
    out.insert("CbarA_td".into(), c_psi * c_psi * (1.0 + gamma) / denom);
    let growth = if beta == 0.0 { 1.0 } else { (beta * k / E).powf(beta / 2.0) };
    out.insert("CbarbK_td".into(), c_rk * c_psi * growth / denom);
}

/// Relative disagreement, with equal infinities counting as agreement.
pub fn rel_gap(x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    if !x.is_finite() || !y.is_finite() {
        return f64::INFINITY;
    }
    (x - y).abs() / x.abs().max(y.abs())
}

/// Keys where `report` and `dual` disagree beyond `tol`, plus keys present in only one of them.
pub fn disagreements(report: &Values, dual: &Values, tol: f64) -> Vec<(String, f64, f64)> {
    let mut bad = Vec::new();
    for (k, v) in report {
        match dual.get(k) {
            Some(w) if rel_gap(*v, *w) <= tol => {}
            Some(w) => bad.push((k.clone(), *v, *w)),
            None => bad.push((k.clone(), *v, f64::NAN)),
        }
    }
    for (k, w) in dual {
        if !report.contains_key(k) {
            bad.push((k.clone(), f64::NAN, *w));
        }
    }
    bad
}
