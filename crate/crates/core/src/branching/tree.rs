use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::dynamics::{CLParams, EvolverConfig, Potential, Propagator};
use crate::pointer::POVMSet;
use crate::qstate::{DensityMatrix, Expectation, Observable, PhasePoint};
use crate::{Error, Result};

/// Branching parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Interval between splits.
    pub dt: f64,
    /// Children with `|W| = √weight_sq` below this are pruned.
    pub prune_epsilon: f64,
    /// Largest escape weight `|W|²·Tr(Π_rest²ρ)/N` tolerated for a leaf.
    pub escape_tolerance: f64,
    /// Hard cap on live leaves.
    pub leaf_cap: usize,
    /// Pruned mass above which a warning is logged.
    pub drop_budget: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { dt: 1.0, prune_epsilon: 1e-3, escape_tolerance: 0.01, leaf_cap: 4096, drop_budget: 0.01 }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "branching interval must be positive"));
        }
        if !(self.prune_epsilon >= 0.0 && self.prune_epsilon < 1.0) {
            return Err(Error::param("prune_epsilon", "must lie in [0, 1)"));
        }
        if !(self.escape_tolerance >= 0.0) {
            return Err(Error::param("escape_tolerance", "must be non-negative"));
        }
        if self.leaf_cap == 0 {
            return Err(Error::param("leaf_cap", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BranchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub history: Vec<usize>,
    pub weight_sq: f64,
    /// Conditional probabilities of each split along the path.
    pub path_probs: Vec<f64>,
    pub state: DensityMatrix,
    pub z: PhasePoint,
}

/// What the JSON snapshot keeps of every node ever created.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub t: f64,
    pub history: Vec<usize>,
    pub weight: f64,
    pub z: PhasePoint,
    pub leaf: bool,
}

#[derive(Clone, Debug)]
pub struct BranchTree {
    povm: Arc<POVMSet>,
    config: TreeConfig,
    leaves: Vec<BranchNode>,
    archive: Vec<NodeRecord>,
    dropped_weight: f64,
    escape_weight: f64,
    t: f64,
    next_id: usize,
}

/// `(Tr ρX, Tr ρP)`.
pub(crate) fn readout(rho: &DensityMatrix) -> Result<PhasePoint> {
    Ok(PhasePoint::new(rho.expectation(&Observable::X)?, rho.expectation(&Observable::P)?))
}

impl BranchTree {
    pub fn new(povm: Arc<POVMSet>, rho0: DensityMatrix, config: TreeConfig) -> Result<Self> {
        config.validate()?;
        if rho0.grid() != povm.grid() {
            return Err(Error::InvalidGrid("state and POVM grids differ".into()));
        }
        let z = readout(&rho0)?;
        let root = BranchNode {
            id: 0,
            parent: None,
            history: Vec::new(),
            weight_sq: 1.0,
            path_probs: Vec::new(),
            state: rho0,
            z,
        };
        let archive = vec![NodeRecord { id: 0, parent: None, t: 0.0, history: Vec::new(), weight: 1.0, z, leaf: true }];
        Ok(BranchTree {
            povm,
            config,
            leaves: vec![root],
            archive,
            dropped_weight: 0.0,
            escape_weight: 0.0,
            t: 0.0,
            next_id: 1,
        })
    }

    pub fn povm(&self) -> &POVMSet {
        &self.povm
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn leaves(&self) -> &[BranchNode] {
        &self.leaves
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dropped_weight(&self) -> f64 {
        self.dropped_weight
    }

    pub fn escape_weight(&self) -> f64 {
        self.escape_weight
    }

    pub fn leaf_weight(&self) -> f64 {
        self.leaves.iter().map(|l| l.weight_sq).sum()
    }

    /// `Σ leaves + dropped + escape`, which should stay at one.
    pub fn total_weight(&self) -> f64 {
        self.leaf_weight() + self.dropped_weight + self.escape_weight
    }

    pub fn archive(&self) -> &[NodeRecord] {
        &self.archive
    }

    /// Weight-averaged leaf mixture `Σ |W|² ρ_leaf`.
    pub fn mixture(&self) -> Result<DensityMatrix> {
        let g = self.povm.grid();
        let mut acc = ndarray::Array2::zeros((g.n(), g.n()));
        for l in &self.leaves {
            acc.scaled_add(crate::C64::new(l.weight_sq, 0.0), l.state.elements());
        }
        DensityMatrix::new(g.clone(), acc)
    }

    /// JSON snapshot: every node with its history path, weight and `Z`.
    pub fn snapshot_json(&self) -> serde_json::Value {
        serde_json::json!({
            "t": self.t,
            "dt": self.config.dt,
            "prune_epsilon": self.config.prune_epsilon,
            "dropped_weight": self.dropped_weight,
            "escape_weight": self.escape_weight,
            "nodes": self.archive,
        })
    }
}

struct Split {
    children: Vec<(usize, f64, f64, DensityMatrix)>,
    escape: f64,
    dropped: f64,
}

fn split_leaf(povm: &POVMSet, leaf: &BranchNode, cfg: &TreeConfig, t: f64) -> Result<Split> {
    let w = povm.branch_weights(&leaf.state);
    let norm = w.total();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::param("state", "branch weights vanish").at(t));
    }
    let esc = w.rest.max(0.0) / norm;
    let escape = leaf.weight_sq * esc;
    if escape > cfg.escape_tolerance {
        return Err(Error::EscapeMass { weight: escape, tolerance: cfg.escape_tolerance, t });
    }
    let eps_sq = cfg.prune_epsilon * cfg.prune_epsilon;
    let mut children = Vec::new();
    let mut dropped = 0.0;
    for (alpha, &q) in w.cells.iter().enumerate() {
        let p = q.max(0.0) / norm;
        let weight = leaf.weight_sq * p;
        if weight <= 0.0 {
            continue;
        }
        if weight < eps_sq {
            dropped += weight;
            continue;
        }
        let (state, _) = povm.project(alpha, &leaf.state)?;
        children.push((alpha, p, weight, state));
    }
    Ok(Split { children, escape, dropped })
}

/// Evolve every leaf for `Δt`, then split it over the partition.
pub fn branch_step(tree: &mut BranchTree, v: &Potential, cl: &CLParams, cfg: &EvolverConfig) -> Result<()> {
    cfg.validate()?;
    let dt = tree.config.dt;
    let steps = cfg.substeps(dt);
    let prop = Propagator::new(tree.povm.grid(), v, cl, dt / steps as f64)?;
    let t_next = tree.t + dt;
    tree.leaves.par_iter_mut().for_each(|leaf| prop.advance_density(&mut leaf.state, steps));
    let povm = Arc::clone(&tree.povm);
    let tc = tree.config.clone();
    let splits: Vec<Result<Split>> = tree.leaves.par_iter().map(|leaf| split_leaf(&povm, leaf, &tc, t_next)).collect();

    let mut next = Vec::new();
    for (leaf, split) in tree.leaves.iter().zip(splits) {
        let split = split?;
        tree.escape_weight += split.escape;
        tree.dropped_weight += split.dropped;
        for (alpha, p, weight, state) in split.children {
            let z = readout(&state).map_err(|e| e.at(t_next))?;
            let mut history = leaf.history.clone();
            history.push(alpha);
            let mut path_probs = leaf.path_probs.clone();
            path_probs.push(p);
            next.push(BranchNode {
                id: tree.next_id,
                parent: Some(leaf.id),
                history,
                weight_sq: weight,
                path_probs,
                state,
                z,
            });
            tree.next_id += 1;
        }
    }
    if next.len() > tree.config.leaf_cap {
        return Err(Error::ExplosionGuard { leaves: next.len(), cap: tree.config.leaf_cap });
    }
    if tree.dropped_weight > tree.config.drop_budget {
        log::warn!("branching: pruned mass {:.3e} exceeds budget {:.3e}", tree.dropped_weight, tree.config.drop_budget);
    }
    for r in tree.archive.iter_mut() {
        r.leaf = false;
    }
    for n in &next {
        tree.archive.push(NodeRecord {
            id: n.id,
            parent: n.parent,
            t: t_next,
            history: n.history.clone(),
            weight: n.weight_sq,
            z: n.z,
            leaf: true,
        });
    }
    tree.leaves = next;
    tree.t = t_next;
    Ok(())
}

/// `max_x |Σ_leaves |W|²·⟨x|ρ_leaf|x⟩ − ⟨x|ρ_ref|x⟩|`, in units of the
/// position density.
pub fn mixture_consistency(tree: &BranchTree, reference: &DensityMatrix) -> Result<f64> {
    if reference.grid() != tree.povm.grid() {
        return Err(Error::InvalidGrid("reference and tree grids differ".into()));
    }
    let n = reference.grid().n();
    let mut acc = vec![0.0; n];
    for l in &tree.leaves {
        for (a, z) in acc.iter_mut().zip(l.state.elements().diag()) {
            *a += l.weight_sq * z.re;
        }
    }
    Ok(acc.iter().zip(reference.position_density()).map(|(a, r)| (a - r).abs()).fold(0.0, f64::max))
}
