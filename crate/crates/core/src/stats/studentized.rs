//! Distribution of the studentized range.
//!
//! `ptukey` follows Copenhaver and Holland's algorithm: Gauss-Legendre
//! quadrature of Hartley's form of the range distribution, integrated
//! against the chi density of the variance estimate. `qtukey` inverts it by
//! bracketing and bisection.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Absolute tolerance on quantiles returned by [`qtukey`].
pub const QUANTILE_TOLERANCE: f64 = 1e-6;

fn pnorm(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

const XLEG: [f64; 6] = [
    0.981560634246719250690549090149,
    0.904117256370474856678465866119,
    0.769902674194304687036893833213,
    0.587317954286617447296702418941,
    0.367831498998180193752691536644,
    0.125233408511468915472441369464,
];
const ALEG: [f64; 6] = [
    0.047175336386511827194615961485,
    0.106939325995318430960254718194,
    0.160078328543346226334652529543,
    0.203167426723065921749064455810,
    0.233492536538354808760849898925,
    0.249147045813402785000562436043,
];

/// P(range of `cc` standard normals < w), raised to the `rr`-th power.
fn wprob(w: f64, rr: f64, cc: f64) -> f64 {
    const NLEG: usize = 12;
    const IHALF: usize = 6;
    const C1: f64 = -30.0;
    const C2: f64 = -50.0;
    const C3: f64 = 60.0;
    const BB: f64 = 8.0;
    const WLAR: f64 = 3.0;

    let qsqz = w * 0.5;
    if qsqz >= BB {
        return 1.0;
    }
    // first term of Hartley's form: (2 Phi(w/2) - 1)^cc
    let mut pr_w = 2.0 * pnorm(qsqz) - 1.0;
    pr_w = if pr_w >= (C2 / cc).exp() { pr_w.powf(cc) } else { 0.0 };

    let wincr = if w > WLAR { 2 } else { 3 };
    let mut blb = qsqz;
    let binc = (BB - qsqz) / wincr as f64;
    let mut bub = blb + binc;
    let mut einsum = 0.0;
    let cc1 = cc - 1.0;
    for _ in 0..wincr {
        let mut elsum = 0.0;
        let a = 0.5 * (bub + blb);
        let b = 0.5 * (bub - blb);
        for jj in 1..=NLEG {
            let (j, xx) = if IHALF < jj {
                let j = NLEG - jj + 1;
                (j, XLEG[j - 1])
            } else {
                (jj, -XLEG[jj - 1])
            };
            let ac = a + b * xx;
            let qexpo = ac * ac;
            if qexpo > C3 {
                break;
            }
            let pplus = 2.0 * pnorm(ac);
            let pminus = 2.0 * pnorm(ac - w);
            let rinsum = pplus * 0.5 - pminus * 0.5;
            if rinsum >= (C1 / cc1).exp() {
                elsum += ALEG[j - 1] * (-(0.5 * qexpo)).exp() * rinsum.powf(cc1);
            }
        }
        elsum *= 2.0 * b * cc / (2.0 * std::f64::consts::PI).sqrt();
        einsum += elsum;
        blb = bub;
        bub += binc;
    }
    pr_w += einsum;
    if pr_w <= (C1 / rr).exp() {
        return 0.0;
    }
    pr_w.powf(rr).min(1.0)
}

const XLEGQ: [f64; 8] = [
    0.989400934991649932596154173450,
    0.944575023073232576077988415535,
    0.865631202387831743880467897712,
    0.755404408355003033895101194847,
    0.617876244402643748446671764049,
    0.458016777657227386342419442984,
    0.281603550779258913230460501460,
    0.950125098376374401853193354250e-1,
];
const ALEGQ: [f64; 8] = [
    0.271524594117540948517805724560e-1,
    0.622535239386478928628438369944e-1,
    0.951585116824927848099251076022e-1,
    0.124628971255533872052476282192,
    0.149595988816576732081501730547,
    0.169156519395002538189312079030,
    0.182603415044923588866763667969,
    0.189450610455068496285396723208,
];

/// Lower-tail CDF of the studentized range for `k` groups and `df` degrees
/// of freedom (`df = f64::INFINITY` gives the normal-range limit).
pub fn ptukey(q: f64, k: usize, df: f64) -> Result<f64> {
    const NLEGQ: usize = 16;
    const IHALFQ: usize = 8;
    const EPS1: f64 = -30.0;
    const EPS2: f64 = 1.0e-14;
    const DLARG: f64 = 25000.0;

    if k < 2 || !(df >= 2.0) || q.is_nan() {
        return Err(Error::domain(format!("ptukey needs k >= 2, df >= 2 (k={k}, df={df}, q={q})")));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    let cc = k as f64;
    if df > DLARG {
        return Ok(wprob(q, 1.0, cc));
    }

    let f2 = df * 0.5;
    let mut f2lf = f2 * df.ln() - df * std::f64::consts::LN_2 - ln_gamma(f2);
    let f21 = f2 - 1.0;
    let ff4 = df * 0.25;
    let ulen: f64 = if df <= 100.0 {
        1.0
    } else if df <= 800.0 {
        0.5
    } else if df <= 5000.0 {
        0.25
    } else {
        0.125
    };
    f2lf += ulen.ln();

    let mut ans = 0.0;
    for i in 1..=50 {
        let mut otsum = 0.0;
        let twa1 = (2 * i - 1) as f64 * ulen;
        for jj in 1..=NLEGQ {
            let (j, upper) = if IHALFQ < jj { (jj - IHALFQ - 1, true) } else { (jj - 1, false) };
            let off = XLEGQ[j] * ulen;
            let t1 = if upper {
                f2lf + f21 * (twa1 + off).ln() - (off + twa1) * ff4
            } else {
                f2lf + f21 * (twa1 - off).ln() + (off - twa1) * ff4
            };
            if t1 >= EPS1 {
                let node = if upper { twa1 + off } else { twa1 - off };
                let qsqz = q * (node * 0.5).sqrt();
                otsum += wprob(qsqz, 1.0, cc) * ALEGQ[j] * t1.exp();
            }
        }
        if i as f64 * ulen >= 1.0 && otsum <= EPS2 {
            break;
        }
        ans += otsum;
    }
    Ok(ans.min(1.0))
}

/// Quantile of the studentized range: smallest `q` with `ptukey(q) >= p`,
/// to within [`QUANTILE_TOLERANCE`].
pub fn qtukey(p: f64, k: usize, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("qtukey needs 0 < p < 1, got {p}")));
    }
    let mut lo = 0.0;
    let mut hi = 2.0;
    while ptukey(hi, k, df)? < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::numeric("qtukey failed to bracket the quantile"));
        }
    }
    while hi - lo > QUANTILE_TOLERANCE * 0.01 {
        let mid = 0.5 * (lo + hi);
        if ptukey(mid, k, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

    #[test]
    fn two_groups_reduce_to_t() {
        // range of two means over s equals sqrt(2) |T|
        for &df in &[3.0, 10.0, 45.0, 200.0] {
            let t = StudentsT::new(0.0, 1.0, df).unwrap();
            for &q in &[0.5, 1.7, 2.9, 4.4] {
                let x = q / std::f64::consts::SQRT_2;
                let want = t.cdf(x) - t.cdf(-x);
                let got = ptukey(q, 2, df).unwrap();
                assert!((got - want).abs() < 1e-7, "df={df} q={q}: {got} vs {want}");
            }
        }
        let n = Normal::new(0.0, 1.0).unwrap();
        let x = 2.5 / std::f64::consts::SQRT_2;
        let want = n.cdf(x) - n.cdf(-x);
        assert!((ptukey(2.5, 2, f64::INFINITY).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn critical_values_from_tables() {
        let cases = [
            (4, 20.0, 3.958),
            (3, 10.0, 3.877),
            (10, 30.0, 4.824),
            (4, f64::INFINITY, 3.633),
            (2, f64::INFINITY, 2.772),
        ];
        for (k, df, want) in cases {
            let got = qtukey(0.95, k, df).unwrap();
            assert!((got - want).abs() < 2e-3, "k={k} df={df}: {got} vs {want}");
        }
    }

    #[test]
    fn cdf_is_monotone() {
        let mut prev = 0.0;
        for i in 0..60 {
            let p = ptukey(i as f64 * 0.1, 5, 12.0).unwrap();
            assert!(p >= prev - 1e-12 && p <= 1.0);
            prev = p;
        }
        assert!(prev > 0.99);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(ptukey(1.0, 1, 10.0).is_err());
        assert!(ptukey(1.0, 3, 1.0).is_err());
        assert!(qtukey(1.0, 3, 10.0).is_err());
    }
}
