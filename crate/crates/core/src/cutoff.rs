//! Piecewise-polynomial cutoffs.

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` clamped to `[0, 1]`, with its first
/// and second derivatives. Both derivatives vanish at `s = 0` and `s = 1`.
pub fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s2 = s * s;
        let v = s2 * s * (10.0 + s * (-15.0 + 6.0 * s));
        let d1 = 30.0 * s2 * (1.0 - s) * (1.0 - s);
        let d2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        (v, d1, d2)
    }
}

/// The dyadic cutoff: `0` on `(−∞, 1/4] ∪ [2, ∞)`, `1` on `[1/2, 1]`,
/// quintic transitions on `[1/4, 1/2]` and `[1, 2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffChi {
    /// `sup |χ'|`
    pub m0: f64,
    /// `sup |χ''|`
    pub m1: f64,
    /// `sup χ'² / χ` over `{χ > 0}`
    pub m2: f64,
}

impl Default for CutoffChi {
    fn default() -> Self {
        Self::new()
    }
}

impl CutoffChi {
    pub fn new() -> Self {
        let mut m = CutoffChi { m0: 0.0, m1: 0.0, m2: 0.0 };
        let n = 20_000;
        for i in 1..n {
            let t = 0.25 + 1.75 * i as f64 / n as f64;
            let (v, d1, d2) = m.eval(t);
            m.m0 = m.m0.max(d1.abs());
            m.m1 = m.m1.max(d2.abs());
            if v > 0.0 {
                m.m2 = m.m2.max(d1 * d1 / v);
            }
        }
        m
    }

    /// `(χ, χ', χ'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= 0.25 || t >= 2.0 {
            (0.0, 0.0, 0.0)
        } else if t < 0.5 {
            let (v, d1, d2) = smoothstep(4.0 * (t - 0.25));
            (v, 4.0 * d1, 16.0 * d2)
        } else if t <= 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            let (v, d1, d2) = smoothstep(t - 1.0);
            (1.0 - v, -d1, -d2)
        }
    }
}

/// Even C² cutoff in `x`: `1` on `|x| ≤ a`, `0` on `|x| ≥ b`.
pub fn plateau(x: f64, a: f64, b: f64) -> (f64, f64, f64) {
    let ax = x.abs();
    let w = b - a;
    let (v, d1, d2) = smoothstep((ax - a) / w);
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    (1.0 - v, -sign * d1 / w, -d2 / (w * w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let chi = CutoffChi::new();
        assert_eq!(chi.eval(0.75), (1.0, 0.0, 0.0));
        assert_eq!(chi.eval(0.2), (0.0, 0.0, 0.0));
        assert_eq!(chi.eval(2.5), (0.0, 0.0, 0.0));
        let (v, _, _) = chi.eval(0.375);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivatives_continuous_at_knots() {
        let chi = CutoffChi::new();
        for knot in [0.25, 0.5, 1.0, 2.0] {
            let a = chi.eval(knot - 1e-13);
            let b = chi.eval(knot + 1e-13);
            assert!((a.0 - b.0).abs() < 1e-10);
            assert!((a.1 - b.1).abs() < 1e-9);
            assert!((a.2 - b.2).abs() < 1e-9);
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let chi = CutoffChi::new();
        let h = 1e-6;
        for i in 0..200 {
            let t = 0.2 + 1.9 * i as f64 / 200.0;
            if [0.25, 0.5, 1.0, 2.0].iter().any(|k| (t - k).abs() < 1e-3) {
                continue;
            }
            let (_, d1, d2) = chi.eval(t);
            let fd1 = (chi.eval(t + h).0 - chi.eval(t - h).0) / (2.0 * h);
            let fd2 = (chi.eval(t + h).1 - chi.eval(t - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-8, "{t}");
            assert!((d2 - fd2).abs() < 1e-7, "{t}");
        }
    }

    #[test]
    fn bounds_are_finite() {
        let chi = CutoffChi::new();
        assert!((chi.m0 - 7.5).abs() < 1e-3);
        assert!(chi.m1.is_finite() && chi.m2.is_finite() && chi.m2 > 0.0);
    }
}
