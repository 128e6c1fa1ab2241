//! Fixed-order Gauss-Legendre rules and an adaptive Gauss-Kronrod fallback.
//!
//! These rules back the product-integration quadrature weights of the radial
//! grid and the angular reduction of the Riesz kernel. They are internal
//! plumbing: callers pick the rule order, this module only maps nodes onto
//! intervals and accumulates weighted sums.

/// Abscissae of the 12-point Gauss-Legendre rule on [-1, 1] (positive half).
const GL12_NODES: [f64; 6] = [
    0.125_233_408_511_468_92,
    0.367_831_498_998_180_2,
    0.587_317_954_286_617_45,
    0.769_902_674_194_304_7,
    0.904_117_256_370_474_9,
    0.981_560_634_246_719_25,
];

/// Weights of the 12-point Gauss-Legendre rule paired with `GL12_NODES`.
const GL12_WEIGHTS: [f64; 6] = [
    0.249_147_045_813_402_8,
    0.233_492_536_538_354_8,
    0.203_167_426_723_065_92,
    0.160_078_328_543_346_23,
    0.106_939_325_995_318_43,
    0.047_175_336_386_511_83,
];

/// Kronrod abscissae of the 15-point Gauss-Kronrod pair (nonnegative half).
const GK15_NODES: [f64; 8] = [
    0.0,
    0.207_784_955_007_898_47,
    0.405_845_151_377_397_17,
    0.586_087_235_467_691_1,
    0.741_531_185_599_394_4,
    0.864_864_423_359_769_1,
    0.949_107_912_342_758_5,
    0.991_455_371_120_812_6,
];

/// Kronrod weights paired with `GK15_NODES`.
const GK15_WEIGHTS: [f64; 8] = [
    0.209_482_141_084_727_83,
    0.204_432_940_075_298_9,
    0.190_350_578_064_785_4,
    0.169_004_726_639_267_9,
    0.140_653_259_715_525_92,
    0.104_790_010_322_250_18,
    0.063_092_092_629_978_55,
    0.022_935_322_010_529_225,
];

/// Embedded 7-point Gauss weights; nonzero only on the odd Kronrod nodes.
const G7_WEIGHTS: [f64; 4] = [
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_94,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

/// Evaluates a symmetric Gauss rule given by half-tables on [a, b].
fn symmetric_rule(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    nodes: &[f64],
    weights: &[f64],
) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        sum += w * (f(mid + half * x) + f(mid - half * x));
    }
    sum * half
}

/// 12-point Gauss-Legendre quadrature of `f` on [a, b].
pub fn gauss12(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    symmetric_rule(&mut f, a, b, &GL12_NODES, &GL12_WEIGHTS)
}

/// One Gauss-Kronrod 15(7) panel: returns (kronrod value, error estimate).
fn gk15_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_mid = f(mid);
    let mut kronrod = GK15_WEIGHTS[0] * f_mid;
    let mut gauss = G7_WEIGHTS[0] * f_mid;
    for i in 1..GK15_NODES.len() {
        let fp = f(mid + half * GK15_NODES[i]);
        let fm = f(mid - half * GK15_NODES[i]);
        kronrod += GK15_WEIGHTS[i] * (fp + fm);
        if i % 2 == 0 {
            gauss += G7_WEIGHTS[i / 2] * (fp + fm);
        }
    }
    kronrod *= half;
    gauss *= half;
    let err = (kronrod - gauss).abs();
    (kronrod, err)
}

/// Adaptive Gauss-Kronrod quadrature on [a, b].
///
/// Bisects the worst panel until the summed error estimate drops below
/// `rel_tol` times the accumulated value (with `abs_floor` guarding the
/// zero-value case) or the panel budget is exhausted. Integrable endpoint
/// singularities converge because bisection clusters panels geometrically.
pub fn adaptive_gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    const MAX_PANELS: usize = 200;
    let abs_floor = 1e-300;
    let (v, e) = gk15_panel(f, a, b);
    // Panels kept as (error, a, b, value); the worst panel is split first.
    let mut panels: Vec<(f64, f64, f64, f64)> = vec![(e, a, b, v)];
    for _ in 0..MAX_PANELS {
        let total: f64 = panels.iter().map(|p| p.3).sum();
        let err: f64 = panels.iter().map(|p| p.0).sum();
        if err <= rel_tol * total.abs().max(abs_floor) {
            break;
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .map(|(i, _)| i)
            .expect("panel list is nonempty");
        let (_, pa, pb, _) = panels.swap_remove(worst);
        let pm = 0.5 * (pa + pb);
        let (v1, e1) = gk15_panel(f, pa, pm);
        let (v2, e2) = gk15_panel(f, pm, pb);
        panels.push((e1, pa, pm, v1));
        panels.push((e2, pm, pb, v2));
    }
    panels.iter().map(|p| p.3).sum()
}

/// Quintic smoothstep on [0, 1] with its derivative.
///
/// Returns (s, s') where s = t³(10 - 15t + 6t²) rises from 0 to 1 with
/// vanishing first and second derivatives at both endpoints; the slope
/// peaks at 15/8 in the middle. Inputs outside [0, 1] clamp to the flat
/// extensions.
pub fn smoothstep01(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (s, ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss12_integrates_degree_23_exactly() {
        let exact = (2.0_f64.powi(24) - 1.0) / 24.0;
        let val = gauss12(|x| x.powi(23), 1.0, 2.0);
        assert_relative_eq!(val, exact, max_relative = 1e-13);
    }

    #[test]
    fn adaptive_rule_matches_sine_integral() {
        let val = adaptive_gk15(&mut |x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_relative_eq!(val, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn adaptive_rule_handles_integrable_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2, singular at the left endpoint.
        let val = adaptive_gk15(&mut |x: f64| x.powf(-0.5), 1e-300, 1.0, 1e-9);
        assert_relative_eq!(val, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn adaptive_rule_handles_interior_kink() {
        // int_0^1 |x - 0.5|^{-0.3} dx = 2 * 0.5^{0.7} / 0.7.
        let exact = 2.0 * 0.5_f64.powf(0.7) / 0.7;
        let val = adaptive_gk15(&mut |x: f64| (x - 0.5).abs().max(1e-300).powf(-0.3), 0.0, 1.0, 1e-10);
        assert_relative_eq!(val, exact, max_relative = 1e-7);
    }

    #[test]
    fn smoothstep_is_flat_at_both_ends_with_bounded_slope() {
        assert_eq!(smoothstep01(-0.5), (0.0, 0.0));
        assert_eq!(smoothstep01(0.0), (0.0, 0.0));
        assert_eq!(smoothstep01(1.0), (1.0, 0.0));
        assert_eq!(smoothstep01(2.0), (1.0, 0.0));
        let (mid, slope_mid) = smoothstep01(0.5);
        assert_relative_eq!(mid, 0.5, max_relative = 1e-15);
        assert_relative_eq!(slope_mid, 15.0 / 8.0, max_relative = 1e-15);
        // The derivative field matches a central difference away from the
        // endpoints and never exceeds the midpoint slope.
        for k in 1..100 {
            let t = k as f64 / 100.0;
            let (_, ds) = smoothstep01(t);
            let fd = (smoothstep01(t + 1e-6).0 - smoothstep01(t - 1e-6).0) / 2e-6;
            assert_relative_eq!(ds, fd, epsilon = 1e-8);
            assert!(ds <= 15.0 / 8.0 + 1e-12);
        }
    }
}
