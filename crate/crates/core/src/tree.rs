//! One realization of the unvaccinated process, materialized as a tree of
//! individuals with birth/death times and one coupling uniform per birth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reproduction::ReproductionLaw;
use crate::rng::{child_label, initial_label, ReplicateStreams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimCaps {
    /// No births are generated after this time (days).
    pub horizon: f64,
    /// Simulation stops and the tree is censored once this many births exist.
    pub max_births: usize,
}

impl Default for SimCaps {
    fn default() -> Self {
        SimCaps { horizon: 700.0, max_births: 100_000 }
    }
}

impl SimCaps {
    pub fn new(horizon: f64, max_births: usize) -> Result<Self> {
        let caps = SimCaps { horizon, max_births };
        caps.validate()?;
        Ok(caps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidCaps(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.max_births < 1 {
            return Err(Error::InvalidCaps("max_births must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Individual {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub death_time: f64,
    /// U_i of the birth that produced this individual; `None` for initials.
    pub coupling_uniform: Option<f64>,
}

impl Individual {
    pub fn lifetime(&self) -> f64 {
        self.death_time - self.birth_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingTree {
    initials: usize,
    individuals: Vec<Individual>,
    censored: bool,
    /// Time of the first birth that was not generated because of the birth
    /// cap. Every birth strictly before this time is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    censor_time: Option<f64>,
    caps: SimCaps,
}

#[derive(Debug, Clone, Copy)]
struct PendingBirth {
    time: f64,
    parent: usize,
    contact: usize,
    parent_label: u64,
}

impl PendingBirth {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.parent.cmp(&other.parent))
            .then(self.contact.cmp(&other.contact))
    }
}

impl PartialEq for PendingBirth {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for PendingBirth {}
impl PartialOrd for PendingBirth {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PendingBirth {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Simulates one realization of the unvaccinated process started from
/// `initials` individuals at time 0.
///
/// Births are generated in the canonical order (birth time, parent id,
/// contact index) and numbered in that order. Life histories and coupling
/// uniforms come from two independent substreams of `seed`, addressed by
/// genealogical label, so the result is a pure function of the arguments.
pub fn simulate_tree(law: &ReproductionLaw, initials: usize, caps: SimCaps, seed: u64) -> Result<BranchingTree> {
    law.validate()?;
    caps.validate()?;
    if initials == 0 {
        return Err(Error::InvalidTree("at least one initial individual is required".into()));
    }
    let streams = ReplicateStreams::new(seed);
    let mut individuals = Vec::with_capacity(initials + 4);
    let mut heap = BinaryHeap::new();

    let push_contacts = |heap: &mut BinaryHeap<PendingBirth>, id: usize, birth: f64, label: u64, ages: &[f64]| {
        for (contact, age) in ages.iter().enumerate() {
            let time = birth + age;
            if time <= caps.horizon {
                heap.push(PendingBirth { time, parent: id, contact, parent_label: label });
            }
        }
    };

    for index in 0..initials {
        let label = initial_label(index);
        let history = law.sample_unchecked(&mut streams.life_history(label));
        individuals.push(Individual {
            id: index,
            parent: None,
            birth_time: 0.0,
            death_time: history.lifetime,
            coupling_uniform: None,
        });
        push_contacts(&mut heap, index, 0.0, label, &history.contact_ages);
    }

    let mut censor_time = None;
    while let Some(pending) = heap.pop() {
        if individuals.len() - initials >= caps.max_births {
            censor_time = Some(pending.time);
            log::warn!(
                "birth cap {} reached at t = {} (seed {seed}); tree censored",
                caps.max_births,
                pending.time
            );
            break;
        }
        let id = individuals.len();
        let label = child_label(pending.parent_label, pending.contact);
        let history = law.sample_unchecked(&mut streams.life_history(label));
        individuals.push(Individual {
            id,
            parent: Some(pending.parent),
            birth_time: pending.time,
            death_time: pending.time + history.lifetime,
            coupling_uniform: Some(streams.coupling_uniform(label)),
        });
        push_contacts(&mut heap, id, pending.time, label, &history.contact_ages);
    }

    Ok(BranchingTree {
        initials,
        individuals,
        censored: censor_time.is_some(),
        censor_time,
        caps,
    })
}

impl BranchingTree {
    /// Builds a tree from explicit parts, checking every structural invariant.
    pub fn from_parts(initials: usize, individuals: Vec<Individual>, caps: SimCaps) -> Result<Self> {
        let tree = BranchingTree { initials, individuals, censored: false, censor_time: None, caps };
        tree.validate()?;
        Ok(tree)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let tree: BranchingTree = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serialization cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTree(msg));
        self.caps.validate()?;
        if self.initials == 0 || self.individuals.len() < self.initials {
            return bad(format!("{} initials but {} individuals", self.initials, self.individuals.len()));
        }
        if self.censored != self.censor_time.is_some() {
            return bad("censored flag and censor_time disagree".into());
        }
        let mut previous: Option<(f64, usize)> = None;
        for (idx, ind) in self.individuals.iter().enumerate() {
            if ind.id != idx {
                return bad(format!("individual at position {idx} has id {}", ind.id));
            }
            if !(ind.death_time > ind.birth_time) {
                return bad(format!("individual {idx} dies at or before its birth"));
            }
            if idx < self.initials {
                if ind.parent.is_some() || ind.birth_time != 0.0 || ind.coupling_uniform.is_some() {
                    return bad(format!("initial {idx} must have no parent, birth 0 and no uniform"));
                }
                continue;
            }
            let Some(parent) = ind.parent else {
                return bad(format!("individual {idx} is not an initial but has no parent"));
            };
            if parent >= idx {
                return bad(format!("individual {idx} precedes its parent {parent}"));
            }
            let p = &self.individuals[parent];
            if ind.birth_time < p.birth_time || ind.birth_time > p.death_time {
                return bad(format!("individual {idx} born outside its parent's life"));
            }
            if ind.birth_time > self.caps.horizon {
                return bad(format!("individual {idx} born after the horizon"));
            }
            match ind.coupling_uniform {
                Some(u) if u > 0.0 && u < 1.0 => {}
                _ => return bad(format!("individual {idx} needs a coupling uniform in (0, 1)")),
            }
            if let Some((t, par)) = previous {
                if (ind.birth_time, parent) < (t, par) {
                    return bad(format!("births out of canonical order at {idx}"));
                }
            }
            previous = Some((ind.birth_time, parent));
        }
        if self.births() > self.caps.max_births {
            return bad("more births than max_births".into());
        }
        Ok(())
    }

    pub fn initials(&self) -> usize {
        self.initials
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    /// Number of non-initial individuals.
    pub fn births(&self) -> usize {
        self.individuals.len() - self.initials
    }

    pub fn is_censored(&self) -> bool {
        self.censored
    }

    pub fn censor_time(&self) -> Option<f64> {
        self.censor_time
    }

    pub fn caps(&self) -> SimCaps {
        self.caps
    }

    /// Individual id of birth `index` (1-based).
    pub fn birth_id(&self, index: usize) -> usize {
        self.initials + index - 1
    }

    /// Overrides the coupling uniform of birth `index` (1-based).
    pub fn set_coupling_uniform(&mut self, index: usize, u: f64) -> Result<()> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidTree(format!("coupling uniform {u} not in (0, 1)")));
        }
        if index == 0 || index > self.births() {
            return Err(Error::InvalidTree(format!("no birth with index {index}")));
        }
        let id = self.birth_id(index);
        self.individuals[id].coupling_uniform = Some(u);
        Ok(())
    }
}

/// Births as `(index, birth time)` pairs in canonical order, indices 1..=N.
pub fn total_birth_order(tree: &BranchingTree) -> Vec<(usize, f64)> {
    tree.individuals[tree.initials..]
        .iter()
        .enumerate()
        .map(|(i, ind)| (i + 1, ind.birth_time))
        .collect()
}
