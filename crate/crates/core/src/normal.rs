//! Univariate, bivariate and multivariate normal distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    static STD: OnceLock<Normal> = OnceLock::new();
    STD.get_or_init(Normal::standard).inverse_cdf(p)
}

const GL_POINTS: usize = 20;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static RULE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut x = [0.0; GL_POINTS];
        let mut w = [0.0; GL_POINTS];
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let step = p1 / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// `P(X > h, Y > k)` for standard bivariate normal `(X, Y)` with
/// correlation `r`.
///
/// Drezner-Wesolowsky integrand on `asin(r)`, with an asymptotic
/// expansion for `|r| >= 0.925` as in Genz's BVND.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let (x, w) = gauss_legendre();
    let mut hk = h * k;
    let mut k = k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (xi, wi) in x.iter().zip(w) {
            let sn = (asr * (xi + 1.0) / 2.0).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / (4.0 * PI) + normal_cdf(-h) * normal_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let bs = (h - k).powi(2);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            bvn = a
                * (-(bs / a_s + hk) / 2.0).exp()
                * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
            if hk > -160.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * (2.0 * PI).sqrt()
                    * normal_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            // The half-interval nodes of the original become a full rule on [0, 2a].
            for (xi, wi) in x.iter().zip(w) {
                let xs = (a * (xi + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * wi
                        * asr.exp()
                        * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += normal_cdf(-h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += if h < 0.0 {
                    normal_cdf(k) - normal_cdf(h)
                } else {
                    normal_cdf(-h) - normal_cdf(-k)
                };
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(X <= h, Y <= k)` for standard bivariate normal with correlation `r`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

/// Number of lattice points per randomized shift in [`mvn_cdf`].
const QMC_POINTS: usize = 4093;
/// Number of random shifts in [`mvn_cdf`].
const QMC_SHIFTS: usize = 16;
const QMC_SEED: u64 = 0x5eed_cafe;

/// `P(X <= upper)` for a standard multivariate normal with correlation
/// matrix `corr`.
///
/// One and two dimensions are evaluated in closed form or by quadrature;
/// higher dimensions use Genz's separation of variables with a
/// deterministically shifted rank-1 lattice.
pub fn mvn_cdf(upper: &[f64], corr: &DMatrix<f64>) -> Result<f64> {
    let m = upper.len();
    if corr.nrows() != m || corr.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, found: corr.nrows() });
    }
    match m {
        0 => Ok(1.0),
        1 => Ok(normal_cdf(upper[0])),
        2 => Ok(bvn_cdf(upper[0], upper[1], corr[(0, 1)])),
        _ => mvn_cdf_qmc(upper, corr),
    }
}

fn mvn_cdf_qmc(upper: &[f64], corr: &DMatrix<f64>) -> Result<f64> {
    let m = upper.len();
    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("correlation matrix is not positive definite".into()))?;
    let c = chol.l();
    let generators: Vec<f64> = first_primes(m - 1).into_iter().map(|p| (p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(QMC_SEED);
    let mut total = 0.0;
    let mut y = vec![0.0; m];
    for _ in 0..QMC_SHIFTS {
        let shift: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>()).collect();
        let mut sum = 0.0;
        for j in 1..=QMC_POINTS {
            for antithetic in [false, true] {
                let mut f = normal_cdf(upper[0] / c[(0, 0)]);
                let mut e = f;
                for i in 1..m {
                    let u = (j as f64 * generators[i - 1] + shift[i - 1]).fract();
                    let mut u = (2.0 * u - 1.0).abs();
                    if antithetic {
                        u = 1.0 - u;
                    }
                    y[i - 1] = normal_quantile((u * e).clamp(1e-300, 1.0 - 1e-16));
                    let s: f64 = (0..i).map(|l| c[(i, l)] * y[l]).sum();
                    e = normal_cdf((upper[i] - s) / c[(i, i)]);
                    f *= e;
                }
                sum += f;
            }
        }
        total += sum / (2 * QMC_POINTS) as f64;
    }
    Ok((total / QMC_SHIFTS as f64).clamp(0.0, 1.0))
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|p| *p * *p <= candidate).all(|p| !candidate.is_multiple_of(*p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}
