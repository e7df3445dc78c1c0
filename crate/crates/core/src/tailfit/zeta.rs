//! Hurwitz zeta ζ(s, q) = Σ_{k≥0} (q + k)^{-s} for s > 1, q > 0.
//!
//! Evaluated by direct summation up to `q + N ≥ 12`, then the Euler-Maclaurin
//! remainder with ten Bernoulli corrections. Everything is computed relative to
//! `q^{-s}` so large exponents and large `q` neither underflow nor lose
//! precision; callers get the logarithm and its derivative in `s`.

/// B_{2j} / (2j)!, j = 1..=10.
const BERNOULLI_OVER_FACTORIAL: [f64; 10] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40_320.0,
    5.0 / 66.0 / 3_628_800.0,
    -691.0 / 2730.0 / 479_001_600.0,
    7.0 / 6.0 / 87_178_291_200.0,
    -3617.0 / 510.0 / 20_922_789_888_000.0,
    43_867.0 / 798.0 / 6_402_373_705_728_000.0,
    -174_611.0 / 330.0 / 2_432_902_008_176_640_000.0,
];

const DIRECT_UNTIL: f64 = 12.0;

/// `(ln ζ(s, q), ∂/∂s ln ζ(s, q))`.
pub fn ln_hurwitz_zeta(s: f64, q: f64) -> (f64, f64) {
    debug_assert!(s > 1.0 && q > 0.0, "hurwitz zeta needs s > 1, q > 0 (s={s}, q={q})");
    let ln_q = q.ln();
    // Scaled sum S = ζ q^s and its s-derivative S'. Each term is
    // exp(-s ln(x/q)) with derivative -ln(x/q) exp(-s ln(x/q)).
    let mut sum = 0.0;
    let mut dsum = 0.0;
    let mut a = q;
    while a < DIRECT_UNTIL {
        let rel = (a / q).ln();
        let term = (-s * rel).exp();
        sum += term;
        dsum -= rel * term;
        a += 1.0;
    }

    let ln_a = a.ln();
    let rel = ln_a - ln_q;
    let base = (-s * rel).exp(); // (a/q)^{-s}
    // ∫_a^∞ x^{-s} dx = a^{1-s}/(s-1)
    let integral = base * a / (s - 1.0);
    sum += integral;
    dsum += integral * (-rel - 1.0 / (s - 1.0));
    // Half of the first omitted term.
    sum += 0.5 * base;
    dsum -= 0.5 * rel * base;

    // T_j = B_{2j}/(2j)! · s(s+1)…(s+2j-2) · a^{-s-2j+1}
    let mut rising = s;
    let mut drising_over = 1.0 / s; // d ln(rising) / ds
    let mut power = base / a;
    for (j, &c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let term = c * rising * power;
        sum += term;
        dsum += term * (drising_over - rel);
        if term.abs() < sum * 1e-18 {
            break;
        }
        let k = 2.0 * j as f64 + 1.0;
        rising *= (s + k) * (s + k + 1.0);
        drising_over += 1.0 / (s + k) + 1.0 / (s + k + 1.0);
        power /= a * a;
    }

    (-s * ln_q + sum.ln(), -ln_q + dsum / sum)
}

pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    ln_hurwitz_zeta(s, q).0.exp()
}
