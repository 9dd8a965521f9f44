use super::DenseMatrix;

/// Name recorded in reports alongside every seed.
pub const RNG_ALGORITHM: &str = "xorshift64*/splitmix64-seed/box-muller";

/// xorshift64* generator (Marsaglia shifts 12/25/27, multiplier 0x2545F4914F6CDD1D).
///
/// The state is derived from `(seed, stream)` through splitmix64, so runs that
/// need independent streams call [`Rng::with_stream`] instead of sharing one
/// generator.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
    spare: Option<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut s = splitmix64(seed ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)));
        if s == 0 {
            s = 0x9E37_79B9_7F4A_7C15;
        }
        Self { state: s, spare: None }
    }

    /// Independent child generator for worker `stream`.
    pub fn split(&mut self, stream: u64) -> Self {
        Self::with_stream(self.next_u64(), stream)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via the Box-Muller transform; values come in pairs.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * theta.sin());
        radius * theta.cos()
    }
}

/// Matrix with i.i.d. standard normal entries, filled row by row.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.gaussian()).collect();
    DenseMatrix::from_vec_unchecked(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = gaussian_matrix(&mut Rng::new(7), 5, 4);
        let b = gaussian_matrix(&mut Rng::new(7), 5, 4);
        assert_eq!(a, b);
        let c = gaussian_matrix(&mut Rng::with_stream(7, 1), 5, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn first_outputs_are_pinned() {
        // Guards the documented constants against accidental edits.
        let mut r = Rng::new(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut s = splitmix64(splitmix64(0x632B_E59B_D9B4_E019));
        let mut expect = Vec::new();
        for _ in 0..3 {
            s ^= s >> 12;
            s ^= s << 25;
            s ^= s >> 27;
            expect.push(s.wrapping_mul(0x2545_F491_4F6C_DD1D));
        }
        assert_eq!(first, expect);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(2024);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let z = rng.gaussian();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!(var > 0.99 && var < 1.01, "var {var}");
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(3);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
