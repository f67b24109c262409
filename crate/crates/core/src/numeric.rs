//! Small numerical kernels shared by the modules: compensated summation,
//! least-squares slopes, Gauss-Legendre rules and seeded random streams.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn compensated_sum_complex<I: IntoIterator<Item = Complex64>>(xs: I) -> Complex64 {
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for x in xs {
        re.add(x.re);
        im.add(x.im);
    }
    Complex64::new(re.value(), im.value())
}

/// Ordinary least-squares slope of `ys` against `xs`. `None` when fewer than
/// two points or the abscissae are all equal.
pub fn lsq_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = compensated_sum(xs[..n].iter().copied()) / n as f64;
    let my = compensated_sum(ys[..n].iter().copied()) / n as f64;
    let sxy = compensated_sum((0..n).map(|i| (xs[i] - mx) * (ys[i] - my)));
    let sxx = compensated_sum((0..n).map(|i| (xs[i] - mx) * (xs[i] - mx)));
    if sxx <= 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Slope of `ln y` against `ln x`, skipping pairs where either is not
/// strictly positive and finite.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    lsq_slope(&lx, &ly)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n and its derivative.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Deterministic random stream `stream` of the master seed. Independent
/// tasks draw from distinct streams so results do not depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Returns `Some(e)` when `x == 2^e` exactly.
pub fn exact_log2(x: f64) -> Option<i32> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        // subnormal: power of two iff a single mantissa bit is set
        if mant.count_ones() == 1 {
            Some(mant.trailing_zeros() as i32 - 1074)
        } else {
            None
        }
    } else if mant == 0 {
        Some(exp - 1023)
    } else {
        None
    }
}

/// `r^beta`, exact when `r` is a power of two and `beta * log2 r` is an
/// integer (dyadic radii with rational exponents such as 3/2).
pub fn dyadic_pow(r: f64, beta: f64) -> f64 {
    if let Some(e) = exact_log2(r) {
        let p = e as f64 * beta;
        if p.fract() == 0.0 && p.abs() < 1000.0 {
            return 2f64.powi(p as i32);
        }
    }
    r.powf(beta)
}

pub fn is_finite_point(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree 15 is exact for 8 nodes
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn dyadic_powers_are_exact() {
        assert_eq!(dyadic_pow(0.25, 1.5), 0.125);
        assert_eq!(dyadic_pow(2f64.powi(-40), 1.5), 2f64.powi(-60));
        assert_eq!(exact_log2(0.75), None);
        assert!((dyadic_pow(0.5, 1.5) - 0.5f64.powf(1.5)).abs() < 1e-16);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        use rand::Rng;
        let a: u64 = stream_rng(7, 1).random();
        let b: u64 = stream_rng(7, 1).random();
        let c: u64 = stream_rng(7, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
