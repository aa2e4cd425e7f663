use crate::error::{Error, Result};
use crate::trap::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllanPoint {
    /// Window length in samples.
    pub window: usize,
    /// Averaging time (s).
    pub tau: f64,
    pub deviation: f64,
}

fn windows(len: usize) -> impl Iterator<Item = usize> {
    std::iter::successors(Some(1usize), |n| n.checked_mul(2)).take_while(move |n| 2 * n < len)
}

/// `sqrt(sum_k d2(k) / (2 (len - 2n + 1)))`, with `d2(k)` the squared
/// difference of the adjacent window means starting at `k` and `k + n`.
fn overlapping(len: usize, n: usize, d2: impl Fn(usize) -> f64) -> f64 {
    let count = len - 2 * n + 1;
    let sum: f64 = (0..count).map(d2).sum();
    (sum / (2.0 * count as f64)).sqrt()
}

/// Overlapping Allan-style deviation of a scalar series sampled every
/// `interval` seconds, for windows 1, 2, 4, ... shorter than half the series.
pub fn allan_style_deviation(series: &[f64], interval: f64) -> Result<Vec<AllanPoint>> {
    if series.len() < 4 {
        return Err(Error::TooShort {
            needed: 4,
            got: series.len(),
        });
    }
    let prefix: Vec<f64> = std::iter::once(0.0)
        .chain(series.iter().scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        }))
        .collect();
    let mean = |start: usize, n: usize| (prefix[start + n] - prefix[start]) / n as f64;
    Ok(windows(series.len())
        .map(|n| AllanPoint {
            window: n,
            tau: n as f64 * interval,
            deviation: overlapping(series.len(), n, |k| (mean(k + n, n) - mean(k, n)).powi(2)),
        })
        .collect())
}

/// Vector form: squared differences of the window-mean vectors are summed
/// over components.
pub fn allan_style_deviation_vec(series: &[Vec3], interval: f64) -> Result<Vec<AllanPoint>> {
    if series.len() < 4 {
        return Err(Error::TooShort {
            needed: 4,
            got: series.len(),
        });
    }
    let mut prefix = Vec::with_capacity(series.len() + 1);
    prefix.push(Vec3::zeros());
    for v in series {
        let last = *prefix.last().expect("non-empty");
        prefix.push(last + v);
    }
    let mean = |start: usize, n: usize| (prefix[start + n] - prefix[start]) / n as f64;
    Ok(windows(series.len())
        .map(|n| AllanPoint {
            window: n,
            tau: n as f64 * interval,
            deviation: overlapping(series.len(), n, |k| (mean(k + n, n) - mean(k, n)).norm_squared()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_series_is_zero() {
        let dev = allan_style_deviation(&[2.5; 64], 1.0).unwrap();
        assert!(dev.iter().all(|p| p.deviation == 0.0));
        assert_eq!(dev.iter().map(|p| p.window).collect::<Vec<_>>(), vec![1, 2, 4, 8, 16]);
    }

    #[test]
    fn too_short() {
        assert_eq!(allan_style_deviation(&[1.0; 3], 1.0), Err(Error::TooShort { needed: 4, got: 3 }));
    }

    #[test]
    fn white_noise_falls_as_inverse_sqrt() {
        let mut rng = trial_rng(5, "allan", 0);
        let sigma = 0.3;
        let series: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect();
        for p in allan_style_deviation(&series, 11.0).unwrap().iter().filter(|p| p.window <= 64) {
            let expected = sigma / (p.window as f64).sqrt();
            assert!((p.deviation / expected - 1.0).abs() < 0.2, "n={} {}", p.window, p.deviation);
            assert_eq!(p.tau, 11.0 * p.window as f64);
        }
    }

    #[test]
    fn random_walk_rises() {
        let mut rng = trial_rng(6, "allan", 0);
        let mut x = 0.0;
        let series: Vec<f64> = (0..4096)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += z;
                x
            })
            .collect();
        let dev = allan_style_deviation(&series, 1.0).unwrap();
        assert!(dev.windows(2).all(|w| w[1].deviation > w[0].deviation));
    }

    #[test]
    fn vector_form_adds_components() {
        let mut rng = trial_rng(7, "allan", 0);
        let xs: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v: Vec<Vec3> = xs.iter().zip(&ys).map(|(x, y)| Vec3::new(*x, *y, 0.0)).collect();
        let dx = allan_style_deviation(&xs, 1.0).unwrap();
        let dy = allan_style_deviation(&ys, 1.0).unwrap();
        let dv = allan_style_deviation_vec(&v, 1.0).unwrap();
        for ((a, b), c) in dx.iter().zip(&dy).zip(&dv) {
            assert!((c.deviation.powi(2) - a.deviation.powi(2) - b.deviation.powi(2)).abs() < 1e-12);
        }
    }
}
