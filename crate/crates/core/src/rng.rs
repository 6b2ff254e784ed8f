//! Counter-based random streams.
//!
//! Simulations key every variate by `(seed, trial, stream, step, draw)` so that
//! paired runs (full vs reduced, shielded vs unshielded) consume *identical*
//! noise per edge and per step regardless of how much randomness other parts
//! of the run consume. All samplers here use CDF inversion, one uniform per
//! variate, which keeps common-random-number coupling tight.

/// SplitMix64 finalizer; full-period bijective mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one independent noise stream within a run.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey {
    pub seed: u64,
    pub trial: u64,
    pub stream: u64,
}

impl StreamKey {
    pub fn new(seed: u64, trial: u64, stream: u64) -> Self {
        Self { seed, trial, stream }
    }

    #[inline]
    fn word(&self, step: u64, draw: u64) -> u64 {
        let mut h = mix64(self.seed ^ 0x5bf0_3635_dee9_1d1d);
        h = mix64(h ^ self.trial);
        h = mix64(h ^ self.stream);
        h = mix64(h ^ step);
        mix64(h ^ draw)
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, step: u64, draw: u64) -> f64 {
        let w = self.word(step, draw);
        ((w >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller (cosine branch), one variate per call.
    #[inline]
    pub fn normal(&self, step: u64, draw: u64) -> f64 {
        let u1 = self.uniform(step, 2 * draw);
        let u2 = self.uniform(step, 2 * draw + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential with the given rate.
    #[inline]
    pub fn exponential(&self, step: u64, draw: u64, rate: f64) -> f64 {
        -self.uniform(step, draw).ln() / rate
    }

    /// Poisson by inversion. Large means are split into chunks so the CDF walk
    /// never underflows; each chunk consumes one uniform.
    pub fn poisson(&self, step: u64, draw_base: u64, lambda: f64) -> f64 {
        debug_assert!(lambda >= 0.0);
        if lambda == 0.0 {
            return 0.0;
        }
        const CHUNK: f64 = 400.0;
        let chunks = (lambda / CHUNK).ceil().max(1.0) as u64;
        let lam = lambda / chunks as f64;
        let mut total = 0.0;
        for c in 0..chunks {
            total += poisson_inv(self.uniform(step, draw_base + c), lam);
        }
        total
    }

    /// Binomial(n, p) by inversion, splitting large populations in half so the
    /// starting probability (1-p)^n never underflows.
    pub fn binomial(&self, step: u64, draw_base: u64, n: u64, p: f64) -> u64 {
        debug_assert!((0.0..=1.0).contains(&p));
        if n == 0 || p == 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        let mut stack = vec![n];
        let mut total = 0u64;
        let mut next_draw = draw_base;
        while let Some(m) = stack.pop() {
            if m as f64 * p.min(1.0 - p) > 300.0 {
                let half = m / 2;
                stack.push(half);
                stack.push(m - half);
            } else {
                total += binomial_inv(self.uniform(step, next_draw), m, p);
                next_draw += 1;
            }
        }
        total
    }
}

fn poisson_inv(u: f64, lambda: f64) -> f64 {
    let mut k = 0.0f64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1.0;
        p *= lambda / k;
        cdf += p;
        if p < 1e-300 && k > lambda {
            break;
        }
    }
    k
}

fn binomial_inv(u: f64, n: u64, p: f64) -> u64 {
    let nf = n as f64;
    let odds = p / (1.0 - p);
    let mut k = 0u64;
    let mut pk = (1.0 - p).powf(nf);
    let mut cdf = pk;
    while u > cdf && k < n {
        let kf = k as f64;
        pk *= odds * (nf - kf) / (kf + 1.0);
        k += 1;
        cdf += pk;
        if pk < 1e-300 && kf > nf * p {
            break;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_in_open_unit_interval() {
        let key = StreamKey::new(7, 0, 3);
        for step in 0..1000 {
            let u = key.uniform(step, 0);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = StreamKey::new(1, 2, 3);
        let b = StreamKey::new(1, 2, 3);
        let c = StreamKey::new(1, 2, 4);
        assert_eq!(a.normal(5, 0), b.normal(5, 0));
        assert_ne!(a.normal(5, 0), c.normal(5, 0));
    }

    #[test]
    fn normal_moments() {
        let key = StreamKey::new(42, 0, 0);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let x = key.normal(i, 0);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn poisson_moments_small_and_chunked() {
        let key = StreamKey::new(9, 0, 1);
        for &lambda in &[0.3, 4.0, 900.0] {
            let n = 40_000;
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..n {
                let x = key.poisson(i, 0, lambda);
                s1 += x;
                s2 += x * x;
            }
            let mean = s1 / n as f64;
            let var = s2 / n as f64 - mean * mean;
            assert!((mean - lambda).abs() < 4.0 * (lambda / n as f64).sqrt().max(1e-3));
            assert!((var / lambda - 1.0).abs() < 0.1, "lambda {lambda} var {var}");
        }
    }

    #[test]
    fn binomial_moments() {
        let key = StreamKey::new(11, 0, 2);
        let (n_pop, p) = (5000u64, 0.02);
        let n = 30_000;
        let mut s1 = 0.0;
        for i in 0..n {
            s1 += key.binomial(i, 0, n_pop, p) as f64;
        }
        let mean = s1 / n as f64;
        let expect = n_pop as f64 * p;
        assert!((mean - expect).abs() < 4.0 * (expect / n as f64).sqrt());
    }

    #[test]
    fn coupled_poisson_draws_stay_close() {
        // Common-random-number property: nearby means give nearby counts.
        let key = StreamKey::new(3, 1, 0);
        let mut max_diff = 0.0f64;
        for i in 0..5000 {
            let a = key.poisson(i, 0, 20.0);
            let b = key.poisson(i, 0, 20.2);
            max_diff = max_diff.max((a - b).abs());
        }
        assert!(max_diff <= 3.0, "coupling too loose: {max_diff}");
    }
}
