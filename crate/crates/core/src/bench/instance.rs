use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::linalg::{gaussian_matrix, gram, matmul, thin_qr, DenseMatrix, Rng};
use crate::objectives::{default_weights, PcaObjective};

const MAGIC: &[u8; 8] = b"LNDINST1";

/// Prescribed spectrum for the data matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spectrum {
    /// Singular values of `A`: `leading * ratio^i`.
    Geometric { leading: f64, ratio: f64 },
    /// Eigenvalues of `c = A^T A`, descending; missing entries are zero.
    Eigenvalues { values: Vec<f64> },
}

impl Default for Spectrum {
    fn default() -> Self {
        Spectrum::Geometric { leading: 1.0, ratio: 0.9 }
    }
}

impl Spectrum {
    /// Eigenvalues of `c`: linear over the first `r + 1`
    /// (`leading * (r + 1 - i) / (r + 1)`), then halving.
    pub fn linear_head(d: usize, r: usize, leading: f64) -> Self {
        let head = (r + 1).min(d);
        let step = leading / head as f64;
        let mut values: Vec<f64> = (0..head).map(|i| leading * (head - i) as f64 / head as f64).collect();
        let mut t = step;
        while values.len() < d {
            t *= 0.5;
            values.push(t);
        }
        Spectrum::Eigenvalues { values }
    }

    /// The `k` eigenvalues of `c` this spectrum prescribes, descending.
    pub fn eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        let vals: Vec<f64> = match self {
            Spectrum::Geometric { leading, ratio } => {
                if !(*leading > 0.0 && *ratio > 0.0 && *ratio <= 1.0) {
                    return Err(invalid(format!("geometric spectrum needs leading > 0 and ratio in (0, 1], got {leading}, {ratio}")));
                }
                (0..k).map(|i| (leading * ratio.powi(i as i32)).powi(2)).collect()
            }
            Spectrum::Eigenvalues { values } => {
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || values.windows(2).any(|w| w[0] < w[1]) {
                    return Err(invalid("eigenvalues must be finite, nonnegative and descending"));
                }
                (0..k).map(|i| values.get(i).copied().unwrap_or(0.0)).collect()
            }
        };
        Ok(vals)
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spectrum::Geometric { leading, ratio } => write!(f, "geometric:{ratio}:{leading}"),
            Spectrum::Eigenvalues { values } => write!(f, "eigenvalues[{}]", values.len()),
        }
    }
}

/// Leading eigenvalue of `c` at which the analytic gradient bound `G` of a
/// PCA instance with unit top weight satisfies `G^2 = lambda^2 (1+eps) eps^2`.
///
/// `alpha_safe * G` peaks there, and with it the progress per safe step.
/// For `eps = 0.5` the safe step is `1 / (3 lambda)`.
pub fn balanced_leading_eigenvalue(r: usize, lambda: f64, epsilon: f64) -> f64 {
    let k = lambda * epsilon * (1.0 + epsilon).sqrt();
    k / (2.0 * (r as f64 * (1.0 + epsilon)).sqrt() * (1.0 + epsilon).sqrt())
}

/// Parses `geometric:<ratio>[:<leading>]` or `linear-head:<leading>`
/// (the latter needs `d` and `r`, so it is resolved by [`SpectrumArg::resolve`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SpectrumArg {
    Gaussian,
    Geometric { ratio: f64, leading: f64 },
    LinearHead { leading: f64 },
}

impl Default for SpectrumArg {
    fn default() -> Self {
        SpectrumArg::Geometric { ratio: 0.9, leading: 1.0 }
    }
}

impl SpectrumArg {
    pub fn resolve(&self, d: usize, r: usize) -> Option<Spectrum> {
        match *self {
            SpectrumArg::Gaussian => None,
            SpectrumArg::Geometric { ratio, leading } => Some(Spectrum::Geometric { leading, ratio }),
            SpectrumArg::LinearHead { leading } => Some(Spectrum::linear_head(d, r, leading)),
        }
    }
}

impl fmt::Display for SpectrumArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumArg::Gaussian => f.write_str("gaussian"),
            SpectrumArg::Geometric { ratio, leading } => write!(f, "geometric:{ratio:?}:{leading:?}"),
            SpectrumArg::LinearHead { leading } => write!(f, "linear-head:{leading:?}"),
        }
    }
}

impl From<SpectrumArg> for String {
    fn from(s: SpectrumArg) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SpectrumArg {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for SpectrumArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize, default: Option<f64>| -> Result<f64> {
            match parts.get(i) {
                Some(p) => p.parse::<f64>().map_err(|_| invalid(format!("bad number '{p}' in spectrum '{s}'"))),
                None => default.ok_or_else(|| invalid(format!("spectrum '{s}' is missing a value"))),
            }
        };
        match parts[0] {
            "gaussian" => Ok(SpectrumArg::Gaussian),
            "geometric" => Ok(SpectrumArg::Geometric { ratio: num(1, Some(0.9))?, leading: num(2, Some(1.0))? }),
            "linear-head" => Ok(SpectrumArg::LinearHead { leading: num(1, None)? }),
            other => Err(invalid(format!("unknown spectrum '{other}'"))),
        }
    }
}

/// Generation parameters and identity of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub seed: u64,
    pub spectrum: Option<Spectrum>,
    /// Largest eigenvalue of `c` when known by construction.
    pub lambda_max: Option<f64>,
    /// Hex SHA-256 of the header fields, `c` and the weights.
    pub hash: String,
}

#[derive(Debug)]
pub struct PcaInstance {
    pub objective: PcaObjective,
    pub meta: InstanceMeta,
}

fn instance_hash(d: usize, r: usize, m: usize, seed: u64, c: &DenseMatrix, weights: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(MAGIC);
    for v in [d as u64, r as u64, m as u64, seed] {
        h.update(v.to_le_bytes());
    }
    for v in c.as_slice().iter().chain(weights) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds a PCA instance with `c = A^T A` for an `m x d` data matrix.
///
/// Without a spectrum `A` is standard Gaussian. With one, `A = U diag(s) V^T`
/// where `V` is the Q factor of a Gaussian `d x d` matrix; `U` cancels in
/// `A^T A`, so `c = V diag(s^2) V^T` is formed directly and `lambda_max` is
/// known exactly. At most `min(m, d)` singular values are kept. Weights are
/// `diag(r, ..., 1) / r`. Fails if `A` has rank below `r`.
pub fn generate_pca_instance(d: usize, r: usize, m: usize, seed: u64, spectrum: Option<&Spectrum>) -> Result<PcaInstance> {
    if r == 0 || d < r || m == 0 {
        return Err(invalid(format!("need d >= r >= 1 and m >= 1, got d={d}, r={r}, m={m}")));
    }
    let mut rng = Rng::with_stream(seed, 0);
    let (c, lambda_max) = match spectrum {
        None => {
            let a = gaussian_matrix(&mut rng, m, d);
            // rank(A) >= r iff A times a generic d x r matrix has full column rank
            let omega = gaussian_matrix(&mut rng, d, r);
            if m < r {
                return Err(Error::RankDeficient { op: "generate_pca_instance", pivot: 0.0, threshold: 0.0 });
            }
            thin_qr(&matmul(&a, &omega)?)?;
            (gram(&a)?, None)
        }
        Some(sp) => {
            let k = m.min(d);
            let mut eig = sp.eigenvalues(k)?;
            eig.resize(d, 0.0);
            let positive = eig.iter().filter(|&&v| v > 0.0).count();
            let threshold = 1e-12 * eig[0].max(0.0);
            if positive < r || eig[r - 1] <= threshold {
                return Err(Error::RankDeficient { op: "generate_pca_instance", pivot: eig[r - 1], threshold });
            }
            let (v, _) = thin_qr(&gaussian_matrix(&mut rng, d, d))?;
            let vs = v.scale_columns(&eig)?;
            let mut c = matmul(&vs, &v.transpose())?;
            // exact symmetry
            for i in 0..d {
                for j in i + 1..d {
                    let s = 0.5 * (c.get(i, j) + c.get(j, i));
                    c.set(i, j, s);
                    c.set(j, i, s);
                }
            }
            (c, Some(eig[0]))
        }
    };
    let weights = default_weights(r);
    let hash = instance_hash(d, r, m, seed, &c, &weights);
    let mut objective = PcaObjective::new(c, weights, m)?;
    if let Some(l) = lambda_max {
        objective = objective.with_lambda_max(l);
    }
    Ok(PcaInstance { objective, meta: InstanceMeta { d, r, m, seed, spectrum: spectrum.cloned(), lambda_max, hash } })
}

/// Writes `magic | u64 header length | JSON header | c | weights` (little-endian f64).
pub fn write_instance<W: Write>(mut out: W, inst: &PcaInstance) -> Result<()> {
    let header = serde_json::to_vec(&inst.meta)?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for v in inst.objective.c().as_slice().iter().chain(inst.objective.weights()) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an instance and verifies its hash.
pub fn read_instance<R: Read>(mut input: R) -> Result<PcaInstance> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an instance file".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("instance header too large ({len} bytes)")));
    }
    let mut header = vec![0u8; len];
    input.read_exact(&mut header)?;
    let meta: InstanceMeta = serde_json::from_slice(&header)?;
    let (d, r) = (meta.d, meta.r);
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        input.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
    };
    let c = DenseMatrix::new(d, d, read_f64s(d * d)?)?;
    let weights = read_f64s(r)?;
    let hash = instance_hash(d, r, meta.m, meta.seed, &c, &weights);
    if hash != meta.hash {
        return Err(Error::Format(format!("instance hash mismatch (stored {}, computed {hash})", meta.hash)));
    }
    let mut objective = PcaObjective::new(c, weights, meta.m)?;
    if let Some(l) = meta.lambda_max {
        objective = objective.with_lambda_max(l);
    }
    Ok(PcaInstance { objective, meta })
}

pub fn save_instance(path: &Path, inst: &PcaInstance) -> Result<()> {
    write_instance(std::io::BufWriter::new(std::fs::File::create(path)?), inst)
}

pub fn load_instance(path: &Path) -> Result<PcaInstance> {
    read_instance(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigh;

    #[test]
    fn balanced_scale_gives_third_step() {
        use crate::landing::{safe_step_info, LandingConfig};
        let lead = balanced_leading_eigenvalue(20, 1.0, 0.5);
        assert!((lead - 0.0456435464587638).abs() < 1e-15);
        let inst = generate_pca_instance(40, 20, 40, 1, Some(&Spectrum::linear_head(40, 20, lead))).unwrap();
        let info = safe_step_info(&inst.objective, &LandingConfig::default()).unwrap();
        assert!((info.alpha_safe - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_hash() {
        let a = generate_pca_instance(12, 3, 20, 42, None).unwrap();
        let b = generate_pca_instance(12, 3, 20, 42, None).unwrap();
        let c = generate_pca_instance(12, 3, 20, 43, None).unwrap();
        assert_eq!(a.meta.hash, b.meta.hash);
        assert_ne!(a.meta.hash, c.meta.hash);
        assert_eq!(a.meta.hash.len(), 64);
    }

    #[test]
    fn geometric_spectrum_is_reproduced() {
        let sp = Spectrum::Geometric { leading: 1.0, ratio: 0.9 };
        let inst = generate_pca_instance(16, 3, 40, 7, Some(&sp)).unwrap();
        let e = jacobi_eigh(inst.objective.c()).unwrap();
        for (i, v) in e.eigenvalues.iter().take(6).enumerate() {
            let want = 0.81f64.powi(i as i32);
            assert!((v - want).abs() <= 1e-6 * want, "{i}: {v} vs {want}");
        }
        assert_eq!(inst.meta.lambda_max, Some(1.0));
    }

    #[test]
    fn rank_check() {
        let sp = Spectrum::Eigenvalues { values: vec![1.0, 0.5] };
        assert!(matches!(generate_pca_instance(6, 3, 10, 1, Some(&sp)), Err(Error::RankDeficient { .. })));
        assert!(generate_pca_instance(6, 3, 2, 1, None).is_err());
        let trunc = Spectrum::Geometric { leading: 1.0, ratio: 0.5 };
        assert!(generate_pca_instance(6, 3, 2, 1, Some(&trunc)).is_err());
    }

    #[test]
    fn file_round_trip_and_tamper_detection() {
        let inst = generate_pca_instance(7, 2, 9, 5, Some(&Spectrum::linear_head(7, 2, 2.0))).unwrap();
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst).unwrap();
        let back = read_instance(&buf[..]).unwrap();
        assert_eq!(back.meta, inst.meta);
        assert_eq!(back.objective.c(), inst.objective.c());
        let last = buf.len() - 20;
        buf[last] ^= 1;
        assert!(matches!(read_instance(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn spectrum_args() {
        assert_eq!("gaussian".parse::<SpectrumArg>().unwrap(), SpectrumArg::Gaussian);
        assert_eq!("geometric:0.8".parse::<SpectrumArg>().unwrap(), SpectrumArg::Geometric { ratio: 0.8, leading: 1.0 });
        assert_eq!("linear-head:0.5".parse::<SpectrumArg>().unwrap(), SpectrumArg::LinearHead { leading: 0.5 });
        assert!("linear-head".parse::<SpectrumArg>().is_err());
        for a in [SpectrumArg::Gaussian, SpectrumArg::Geometric { ratio: 0.3, leading: 2.0 }, SpectrumArg::LinearHead { leading: 0.1 }] {
            assert_eq!(a.to_string().parse::<SpectrumArg>().unwrap(), a);
        }
        let Spectrum::Eigenvalues { values } = Spectrum::linear_head(6, 2, 3.0) else { panic!() };
        assert_eq!(values, vec![3.0, 2.0, 1.0, 0.5, 0.25, 0.125]);
    }
}
