//! Simulated generative model: per-pair seeded sampling, empirical kernels and
//! reward perturbation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::model::{CmdpInstance, InstanceFile};

/// Stream reserved for reward perturbation; pair streams use `s * A + a`.
const PERTURB_STREAM: u64 = 1 << 63;

/// Independent ChaCha stream for the pair `(s, a)` under `seed`.
pub fn pair_rng(seed: u64, n_actions: usize, s: usize, a: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((s * n_actions + a) as u64);
    rng
}

pub fn sample_transition<R: Rng + ?Sized>(inst: &CmdpInstance, s: usize, a: usize, rng: &mut R) -> Result<usize> {
    if s >= inst.n_states() || a >= inst.n_actions() {
        return arg(format!("pair ({s}, {a}) outside the instance"));
    }
    let row = inst.row(s, a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s2, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(s2);
        }
    }
    // Rounding left u above the cumulative sum: fall back to the last supported state.
    Ok(row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    /// Instance with `kernel = counts / N`; reward, constraint, threshold and start are the true ones.
    model: CmdpInstance,
    counts: Vec<u64>,
    samples_per_pair: u64,
    seed: u64,
}

impl EmpiricalModel {
    pub fn model(&self) -> &CmdpInstance {
        &self.model
    }

    pub fn kernel_hat(&self) -> &[f64] {
        self.model.kernel()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples_per_pair(&self) -> u64 {
        self.samples_per_pair
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_samples(&self) -> u64 {
        self.samples_per_pair * self.model.n_pairs() as u64
    }

    pub fn to_json(&self) -> Result<String> {
        let f = EmpiricalFile {
            instance: self.model.clone().into(),
            counts: self.counts.chunks(self.model.n_states() * self.model.n_actions())
                .map(|blk| blk.chunks(self.model.n_states()).map(<[u64]>::to_vec).collect())
                .collect(),
            samples_per_pair: self.samples_per_pair,
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: EmpiricalFile = serde_json::from_str(text)?;
        let model = CmdpInstance::try_from(f.instance)?;
        let counts: Vec<u64> = f.counts.into_iter().flatten().flatten().collect();
        let n = f.samples_per_pair;
        if counts.len() != model.kernel().len() || n == 0 {
            return Err(Error::Instance("counts do not match the kernel".into()));
        }
        for (i, row) in counts.chunks(model.n_states()).enumerate() {
            let k = &model.kernel()[i * model.n_states()..(i + 1) * model.n_states()];
            if row.iter().sum::<u64>() != n || row.iter().zip(k).any(|(&c, &p)| c as f64 / n as f64 != p) {
                return Err(Error::Instance(format!("row {i} of the kernel is not counts / N")));
            }
        }
        Ok(Self { model, counts, samples_per_pair: n, seed: f.seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EmpiricalFile {
    #[serde(flatten)]
    instance: InstanceFile,
    counts: Vec<Vec<Vec<u64>>>,
    samples_per_pair: u64,
    seed: u64,
}

/// Draw `n` next states for every pair and form `P_hat = counts / n`.
pub fn build_empirical_model(inst: &CmdpInstance, n: u64, seed: u64) -> Result<EmpiricalModel> {
    if n == 0 {
        return arg("samples per pair must be at least 1");
    }
    let (ns, na) = (inst.n_states(), inst.n_actions());
    let mut counts = vec![0u64; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let mut rng = pair_rng(seed, na, s, a);
            let base = (s * na + a) * ns;
            for _ in 0..n {
                counts[base + sample_transition(inst, s, a, &mut rng)?] += 1;
            }
        }
    }
    let nf = n as f64;
    let kernel: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let model = inst.with_kernel(kernel)?;
    Ok(EmpiricalModel { model, counts, samples_per_pair: n, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedReward {
    pub base: Vec<f64>,
    pub omega: f64,
    pub values: Vec<f64>,
    pub seed: u64,
}

/// `r_p = r + Z`, `Z ~ Unif[0, omega)` i.i.d. per pair.
pub fn perturb_rewards(reward: &[f64], omega: f64, seed: u64) -> Result<PerturbedReward> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return arg(format!("perturbation magnitude {omega} must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PERTURB_STREAM);
    let values = reward.iter().map(|&r| r + omega * rng.random::<f64>()).collect();
    Ok(PerturbedReward { base: reward.to_vec(), omega, values, seed })
}
