//! Scheduling protocol models: contraction factors for the bound machinery
//! and jump maps for the simulator.

use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    SampledData,
    RoundRobin,
    #[serde(alias = "try_once_discard")]
    Tod,
}

/// Protocol parameters used by the gain analysis: the jump contraction λ,
/// the Lipschitz bound m_w on ∂W/∂e, and the linear sandwich coefficients
/// α_lo‖e‖ ≤ W ≤ α_hi‖e‖ for the error measure W.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProtocolModel {
    pub kind: ProtocolKind,
    pub l: usize,
    pub lambda: f64,
    pub m_w: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl ProtocolModel {
    /// Try-once-discard over `l` nodes: W = ‖e‖, λ = √((l−1)/l).
    pub fn tod(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::domain("node count must be at least 1"));
        }
        Ok(ProtocolModel {
            kind: ProtocolKind::Tod,
            l,
            lambda: ((l as f64 - 1.0) / l as f64).sqrt(),
            m_w: 1.0,
            alpha_lo: 1.0,
            alpha_hi: 1.0,
        })
    }

    /// Round-robin over `l` nodes. The λ below is the standard value for the
    /// time-varying round-robin error measure; with the plain W = ‖e‖ used
    /// here it is NOT a certified contraction (see `oracle::verify_lambda`),
    /// so this model drives simulation and the monodromy oracle only.
    pub fn round_robin(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::domain("node count must be at least 1"));
        }
        Ok(ProtocolModel {
            kind: ProtocolKind::RoundRobin,
            l,
            lambda: ((l as f64 - 1.0) / l as f64).sqrt(),
            m_w: (l as f64).sqrt(),
            alpha_lo: 1.0,
            alpha_hi: (l as f64).sqrt(),
        })
    }

    /// Single node, the whole error vector reset at every transmission.
    pub fn sampled_data() -> Self {
        ProtocolModel {
            kind: ProtocolKind::SampledData,
            l: 1,
            lambda: 0.0,
            m_w: 1.0,
            alpha_lo: 1.0,
            alpha_hi: 1.0,
        }
    }

    /// Equal node blocks covering an error vector of dimension `n_e`.
    pub fn node_dims(&self, n_e: usize) -> Result<Vec<usize>> {
        if self.kind == ProtocolKind::SampledData {
            return Ok(vec![n_e]);
        }
        if n_e == 0 || n_e % self.l != 0 {
            return Err(Error::domain(format!(
                "error dimension {n_e} is not divisible into {} equal node blocks",
                self.l
            )));
        }
        Ok(vec![n_e / self.l; self.l])
    }
}

/// Apply one transmission: zero the granted node's error block and return the
/// updated error with the granted node index. Try-once-discard grants the
/// node with the largest block norm (ties to the lowest index), round-robin
/// grants node κ mod l, sampled-data resets everything.
pub fn protocol_jump(
    kind: ProtocolKind,
    kappa: u64,
    e: &DVector<f64>,
    node_dims: &[usize],
) -> Result<(DVector<f64>, usize)> {
    if node_dims.is_empty() {
        return Err(Error::domain("node partition must not be empty"));
    }
    if node_dims.iter().sum::<usize>() != e.len() {
        return Err(Error::domain(format!(
            "node partition covers {} entries but e has {}",
            node_dims.iter().sum::<usize>(),
            e.len()
        )));
    }
    let mut out = e.clone();
    let granted = match kind {
        ProtocolKind::SampledData => {
            out.fill(0.0);
            0
        }
        ProtocolKind::RoundRobin => {
            let node = (kappa % node_dims.len() as u64) as usize;
            zero_block(&mut out, node_dims, node);
            node
        }
        ProtocolKind::Tod => {
            let mut best = 0usize;
            let mut best_norm = -1.0;
            let mut offset = 0usize;
            for (i, &w) in node_dims.iter().enumerate() {
                let norm2: f64 = (0..w).map(|j| e[offset + j] * e[offset + j]).sum();
                if norm2 > best_norm {
                    best_norm = norm2;
                    best = i;
                }
                offset += w;
            }
            zero_block(&mut out, node_dims, best);
            best
        }
    };
    Ok((out, granted))
}

fn zero_block(e: &mut DVector<f64>, node_dims: &[usize], node: usize) {
    let offset: usize = node_dims[..node].iter().sum();
    for j in 0..node_dims[node] {
        e[offset + j] = 0.0;
    }
}
