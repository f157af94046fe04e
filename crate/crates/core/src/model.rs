//! Finite multi-agent constrained POMDP instances.
//!
//! A model is the tuple (N, S, O, A, transition, c, d, P1, kappa) with
//! exact rational probabilities and costs. The joint-observation space
//! factors as `common_obs x private_obs[0] x .. x private_obs[N-1]` and
//! the joint-action space as `actions[0] x .. x actions[N-1]`. Transition
//! rows and the initial distribution must sum to one exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rat;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transition row for state {state:?}, joint action {action:?} sums to {total}, expected 1")]
    RowSum {
        state: String,
        action: Vec<String>,
        total: Rat,
    },
    #[error("initial distribution sums to {total}, expected 1")]
    InitialSum { total: Rat },
    #[error("negative probability {p} at {context}")]
    NegativeProbability { context: String, p: Rat },
    #[error("missing entry: {0}")]
    MissingEntry(String),
    #[error("duplicate entry: {0}")]
    DuplicateEntry(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown label {label:?} in {context}")]
    UnknownLabel { context: String, label: String },
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidDiscount(Rat),
    #[error("discount 1 admits no geometric tail bound")]
    DiscountIsOne,
}

/// Untyped model description, mirroring the JSON file format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawModel {
    pub n_agents: usize,
    pub states: Vec<String>,
    pub common_obs: Vec<String>,
    /// Per-agent private observation alphabets.
    pub private_obs: Vec<Vec<String>>,
    /// Per-agent action alphabets.
    pub actions: Vec<Vec<String>>,
    /// Sparse list of nonzero transition probabilities.
    pub transition: Vec<RawTransition>,
    /// Sparse list of nonzero initial probabilities.
    pub initial: Vec<RawInitial>,
    /// Dense, row-major over S x A: index = state * |A| + joint_action.
    pub cost_c: Vec<Rat>,
    /// Same indexing; each entry is a K-vector.
    pub cost_d: Vec<Vec<Rat>>,
    pub kappa: Vec<Rat>,
}

/// One transition record: P(s_next, o | s, a) = p. The observation tuple
/// lists the common symbol first, then one symbol per agent.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawTransition {
    pub s: String,
    pub a: Vec<String>,
    pub s_next: String,
    pub o: Vec<String>,
    pub p: Rat,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawInitial {
    pub s: String,
    pub o: Vec<String>,
    pub p: Rat,
}

/// One nonzero entry of a transition row: (next state, joint obs, prob).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransEntry {
    pub next_state: usize,
    pub obs: usize,
    pub prob: Rat,
}

/// One nonzero entry of the initial distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitEntry {
    pub state: usize,
    pub obs: usize,
    pub prob: Rat,
}

/// A validated instance. Immutable after construction; every probability
/// and cost is the exact rational written in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamModel {
    n_agents: usize,
    states: Vec<String>,
    common_obs: Vec<String>,
    private_obs: Vec<Vec<String>>,
    actions: Vec<Vec<String>>,
    /// transition[s][a] -> entries sorted by (next_state, obs).
    transition: Vec<Vec<Vec<TransEntry>>>,
    /// Sorted by (state, obs).
    initial: Vec<InitEntry>,
    /// cost_c[s][a]
    cost_c: Vec<Vec<Rat>>,
    /// cost_d[s][a] -> K-vector
    cost_d: Vec<Vec<Vec<Rat>>>,
    kappa: Vec<Rat>,
    c_bound: Rat,
    d_bound: Rat,
}

impl TeamModel {
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.kappa.len()
    }

    pub fn n_common_obs(&self) -> usize {
        self.common_obs.len()
    }

    pub fn n_private_obs(&self, agent: usize) -> usize {
        self.private_obs[agent].len()
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.actions[agent].len()
    }

    pub fn n_joint_actions(&self) -> usize {
        self.actions.iter().map(|a| a.len()).product()
    }

    pub fn n_joint_obs(&self) -> usize {
        self.common_obs.len() * self.private_obs.iter().map(|o| o.len()).product::<usize>()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn common_obs_labels(&self) -> &[String] {
        &self.common_obs
    }

    pub fn private_obs_labels(&self, agent: usize) -> &[String] {
        &self.private_obs[agent]
    }

    pub fn action_labels(&self, agent: usize) -> &[String] {
        &self.actions[agent]
    }

    pub fn kappa(&self) -> &[Rat] {
        &self.kappa
    }

    /// Largest absolute objective cost (Assumption 1 bound).
    pub fn c_bound(&self) -> &Rat {
        &self.c_bound
    }

    /// Largest absolute constraint cost across coordinates.
    pub fn d_bound(&self) -> &Rat {
        &self.d_bound
    }

    /// Joint action id, lexicographic with agent 0 outermost.
    pub fn joint_action_id(&self, per_agent: &[usize]) -> usize {
        debug_assert_eq!(per_agent.len(), self.n_agents);
        per_agent
            .iter()
            .zip(&self.actions)
            .fold(0, |id, (a, space)| id * space.len() + a)
    }

    pub fn decode_joint_action(&self, mut id: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_agents];
        for n in (0..self.n_agents).rev() {
            let base = self.actions[n].len();
            out[n] = id % base;
            id /= base;
        }
        out
    }

    /// Joint observation id: common symbol outermost, then per-agent symbols.
    pub fn joint_obs_id(&self, common: usize, private: &[usize]) -> usize {
        debug_assert_eq!(private.len(), self.n_agents);
        private
            .iter()
            .zip(&self.private_obs)
            .fold(common, |id, (o, space)| id * space.len() + o)
    }

    pub fn decode_joint_obs(&self, mut id: usize) -> (usize, Vec<usize>) {
        let mut private = vec![0; self.n_agents];
        for n in (0..self.n_agents).rev() {
            let base = self.private_obs[n].len();
            private[n] = id % base;
            id /= base;
        }
        (id, private)
    }

    /// Nonzero entries of P(., . | s, a), sorted by (next_state, obs).
    pub fn transition_row(&self, state: usize, joint_action: usize) -> &[TransEntry] {
        &self.transition[state][joint_action]
    }

    pub fn initial_entries(&self) -> &[InitEntry] {
        &self.initial
    }

    pub fn cost_c(&self, state: usize, joint_action: usize) -> &Rat {
        &self.cost_c[state][joint_action]
    }

    pub fn cost_d(&self, state: usize, joint_action: usize) -> &[Rat] {
        &self.cost_d[state][joint_action]
    }

    pub fn render_joint_action(&self, id: usize) -> String {
        let parts = self.decode_joint_action(id);
        let labels: Vec<&str> = parts
            .iter()
            .enumerate()
            .map(|(n, &a)| self.actions[n][a].as_str())
            .collect();
        format!("({})", labels.join(","))
    }

    pub fn render_joint_obs(&self, id: usize) -> String {
        let (common, private) = self.decode_joint_obs(id);
        let mut labels = vec![self.common_obs[common].as_str()];
        labels.extend(
            private
                .iter()
                .enumerate()
                .map(|(n, &o)| self.private_obs[n][o].as_str()),
        );
        format!("({})", labels.join(","))
    }

    /// Re-serializable description; `validate_model(to_raw(m))` equals `m`.
    pub fn to_raw(&self) -> RawModel {
        let mut transition = Vec::new();
        for (s, rows) in self.transition.iter().enumerate() {
            for (a, entries) in rows.iter().enumerate() {
                let a_labels = self.action_id_labels(a);
                for e in entries {
                    transition.push(RawTransition {
                        s: self.states[s].clone(),
                        a: a_labels.clone(),
                        s_next: self.states[e.next_state].clone(),
                        o: self.obs_id_labels(e.obs),
                        p: e.prob.clone(),
                    });
                }
            }
        }
        let initial = self
            .initial
            .iter()
            .map(|e| RawInitial {
                s: self.states[e.state].clone(),
                o: self.obs_id_labels(e.obs),
                p: e.prob.clone(),
            })
            .collect();
        RawModel {
            n_agents: self.n_agents,
            states: self.states.clone(),
            common_obs: self.common_obs.clone(),
            private_obs: self.private_obs.clone(),
            actions: self.actions.clone(),
            transition,
            initial,
            cost_c: self.cost_c.iter().flatten().cloned().collect(),
            cost_d: self.cost_d.iter().flatten().cloned().collect(),
            kappa: self.kappa.clone(),
        }
    }

    fn action_id_labels(&self, id: usize) -> Vec<String> {
        self.decode_joint_action(id)
            .iter()
            .enumerate()
            .map(|(n, &a)| self.actions[n][a].clone())
            .collect()
    }

    fn obs_id_labels(&self, id: usize) -> Vec<String> {
        let (common, private) = self.decode_joint_obs(id);
        let mut labels = vec![self.common_obs[common].clone()];
        labels.extend(
            private
                .iter()
                .enumerate()
                .map(|(n, &o)| self.private_obs[n][o].clone()),
        );
        labels
    }
}

fn label_index(labels: &[String], label: &str, context: &str) -> Result<usize, ModelError> {
    labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| ModelError::UnknownLabel {
            context: context.to_string(),
            label: label.to_string(),
        })
}

/// Validates an untyped description against every model axiom and returns
/// the typed instance with derived cost bounds attached.
pub fn validate_model(raw: &RawModel) -> Result<TeamModel, ModelError> {
    if raw.n_agents == 0 {
        return Err(ModelError::EmptySet("n_agents must be positive".into()));
    }
    if raw.states.is_empty() {
        return Err(ModelError::EmptySet("states".into()));
    }
    if raw.common_obs.is_empty() {
        return Err(ModelError::EmptySet("common_obs".into()));
    }
    if raw.private_obs.len() != raw.n_agents {
        return Err(ModelError::DimensionMismatch(format!(
            "private_obs has {} entries for {} agents",
            raw.private_obs.len(),
            raw.n_agents
        )));
    }
    if raw.actions.len() != raw.n_agents {
        return Err(ModelError::DimensionMismatch(format!(
            "actions has {} entries for {} agents",
            raw.actions.len(),
            raw.n_agents
        )));
    }
    for (n, obs) in raw.private_obs.iter().enumerate() {
        if obs.is_empty() {
            return Err(ModelError::EmptySet(format!("private_obs[{n}]")));
        }
    }
    for (n, acts) in raw.actions.iter().enumerate() {
        if acts.is_empty() {
            return Err(ModelError::EmptySet(format!("actions[{n}]")));
        }
    }
    for (name, labels) in [("states", &raw.states), ("common_obs", &raw.common_obs)] {
        check_unique(labels, name)?;
    }
    for (n, labels) in raw.private_obs.iter().enumerate() {
        check_unique(labels, &format!("private_obs[{n}]"))?;
    }
    for (n, labels) in raw.actions.iter().enumerate() {
        check_unique(labels, &format!("actions[{n}]"))?;
    }

    let n_states = raw.states.len();
    let n_actions: usize = raw.actions.iter().map(|a| a.len()).product();
    let k = raw.kappa.len();

    if raw.cost_c.len() != n_states * n_actions {
        return Err(ModelError::MissingEntry(format!(
            "cost_c has {} entries, expected |S|*|A| = {}",
            raw.cost_c.len(),
            n_states * n_actions
        )));
    }
    if raw.cost_d.len() != n_states * n_actions {
        return Err(ModelError::MissingEntry(format!(
            "cost_d has {} entries, expected |S|*|A| = {}",
            raw.cost_d.len(),
            n_states * n_actions
        )));
    }
    for (i, d) in raw.cost_d.iter().enumerate() {
        if d.len() != k {
            return Err(ModelError::DimensionMismatch(format!(
                "cost_d[{i}] has {} coordinates, kappa has {k}",
                d.len()
            )));
        }
    }

    // Interim builder: resolve labels, detect duplicates.
    let mut skeleton = TeamModel {
        n_agents: raw.n_agents,
        states: raw.states.clone(),
        common_obs: raw.common_obs.clone(),
        private_obs: raw.private_obs.clone(),
        actions: raw.actions.clone(),
        transition: vec![vec![Vec::new(); n_actions]; n_states],
        initial: Vec::new(),
        cost_c: Vec::new(),
        cost_d: Vec::new(),
        kappa: raw.kappa.clone(),
        c_bound: Rat::zero(),
        d_bound: Rat::zero(),
    };

    let resolve_action = |m: &TeamModel, labels: &[String]| -> Result<usize, ModelError> {
        if labels.len() != m.n_agents {
            return Err(ModelError::DimensionMismatch(format!(
                "joint action {labels:?} has {} components for {} agents",
                labels.len(),
                m.n_agents
            )));
        }
        let mut ids = Vec::with_capacity(m.n_agents);
        for (n, l) in labels.iter().enumerate() {
            ids.push(label_index(&m.actions[n], l, &format!("actions[{n}]"))?);
        }
        Ok(m.joint_action_id(&ids))
    };
    let resolve_obs = |m: &TeamModel, labels: &[String]| -> Result<usize, ModelError> {
        if labels.len() != m.n_agents + 1 {
            return Err(ModelError::DimensionMismatch(format!(
                "joint observation {labels:?} has {} components, expected {}",
                labels.len(),
                m.n_agents + 1
            )));
        }
        let common = label_index(&m.common_obs, &labels[0], "common_obs")?;
        let mut ids = Vec::with_capacity(m.n_agents);
        for (n, l) in labels.iter().skip(1).enumerate() {
            ids.push(label_index(&m.private_obs[n], l, &format!("private_obs[{n}]"))?);
        }
        Ok(m.joint_obs_id(common, &ids))
    };

    let mut seen = BTreeMap::new();
    for rec in &raw.transition {
        let s = label_index(&raw.states, &rec.s, "states")?;
        let a = resolve_action(&skeleton, &rec.a)?;
        let s_next = label_index(&raw.states, &rec.s_next, "states")?;
        let o = resolve_obs(&skeleton, &rec.o)?;
        if rec.p.is_negative() {
            return Err(ModelError::NegativeProbability {
                context: format!("transition ({}, {:?}) -> ({}, {:?})", rec.s, rec.a, rec.s_next, rec.o),
                p: rec.p.clone(),
            });
        }
        if seen.insert((s, a, s_next, o), ()).is_some() {
            return Err(ModelError::DuplicateEntry(format!(
                "transition ({}, {:?}) -> ({}, {:?})",
                rec.s, rec.a, rec.s_next, rec.o
            )));
        }
        if !rec.p.is_zero() {
            skeleton.transition[s][a].push(TransEntry {
                next_state: s_next,
                obs: o,
                prob: rec.p.clone(),
            });
        }
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            skeleton.transition[s][a].sort_by_key(|e| (e.next_state, e.obs));
            let total: Rat = skeleton.transition[s][a].iter().map(|e| &e.prob).sum();
            if skeleton.transition[s][a].is_empty() {
                return Err(ModelError::MissingEntry(format!(
                    "transition row for state {:?}, joint action {:?} has no entries",
                    raw.states[s],
                    skeleton.action_id_labels(a)
                )));
            }
            if !total.is_one() {
                return Err(ModelError::RowSum {
                    state: raw.states[s].clone(),
                    action: skeleton.action_id_labels(a),
                    total,
                });
            }
        }
    }

    let mut seen_init = BTreeMap::new();
    for rec in &raw.initial {
        let s = label_index(&raw.states, &rec.s, "states")?;
        let o = resolve_obs(&skeleton, &rec.o)?;
        if rec.p.is_negative() {
            return Err(ModelError::NegativeProbability {
                context: format!("initial ({}, {:?})", rec.s, rec.o),
                p: rec.p.clone(),
            });
        }
        if seen_init.insert((s, o), ()).is_some() {
            return Err(ModelError::DuplicateEntry(format!(
                "initial ({}, {:?})",
                rec.s, rec.o
            )));
        }
        if !rec.p.is_zero() {
            skeleton.initial.push(InitEntry {
                state: s,
                obs: o,
                prob: rec.p.clone(),
            });
        }
    }
    skeleton.initial.sort_by_key(|e| (e.state, e.obs));
    let total: Rat = skeleton.initial.iter().map(|e| &e.prob).sum();
    if !total.is_one() {
        return Err(ModelError::InitialSum { total });
    }

    skeleton.cost_c = raw
        .cost_c
        .chunks(n_actions)
        .map(|row| row.to_vec())
        .collect();
    skeleton.cost_d = raw
        .cost_d
        .chunks(n_actions)
        .map(|row| row.to_vec())
        .collect();

    let mut c_bound = Rat::zero();
    for row in &skeleton.cost_c {
        for c in row {
            c_bound = c_bound.max(c.abs());
        }
    }
    let mut d_bound = Rat::zero();
    for row in &skeleton.cost_d {
        for d in row {
            for dk in d {
                d_bound = d_bound.max(dk.abs());
            }
        }
    }
    skeleton.c_bound = c_bound;
    skeleton.d_bound = d_bound;
    Ok(skeleton)
}

fn check_unique(labels: &[String], context: &str) -> Result<(), ModelError> {
    let mut seen = BTreeMap::new();
    for l in labels {
        if seen.insert(l, ()).is_some() {
            return Err(ModelError::DuplicateEntry(format!("{context} label {l:?}")));
        }
    }
    Ok(())
}

/// Horizon and discount for one evaluation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: usize,
    pub discount: Rat,
}

impl RunConfig {
    pub fn new(horizon: usize, discount: Rat) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::InvalidHorizon);
        }
        if !discount.is_positive() || discount > Rat::one() {
            return Err(ModelError::InvalidDiscount(discount));
        }
        Ok(RunConfig { horizon, discount })
    }

    /// Total occupation mass m(T, alpha) = sum of alpha^(t-1) for t = 1..=T.
    pub fn total_mass(&self) -> Rat {
        (1..=self.horizon).map(|t| self.discount_pow(t)).sum()
    }

    /// alpha^(t-1) for 1-based t.
    pub fn discount_pow(&self, t: usize) -> Rat {
        debug_assert!(t >= 1);
        self.discount.pow((t - 1) as u32)
    }
}

/// Geometric tail bound `bound * alpha^T / (1 - alpha)` on the discounted
/// cost mass discarded past time T. Requires alpha < 1 strictly.
pub fn truncation_bound(bound: &Rat, alpha: &Rat, tail_start: usize) -> Result<Rat, ModelError> {
    if alpha >= &Rat::one() {
        return Err(ModelError::DiscountIsOne);
    }
    if !alpha.is_positive() {
        return Err(ModelError::InvalidDiscount(alpha.clone()));
    }
    Ok(bound * &alpha.pow(tail_start as u32) / (Rat::one() - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::rat;

    #[test]
    fn unit_fixture_validates() {
        let model = fixtures::m_unit();
        assert_eq!(model.n_agents(), 2);
        assert_eq!(model.n_states(), 1);
        assert_eq!(model.n_joint_actions(), 4);
        assert_eq!(model.n_joint_obs(), 1);
        // c = a1 + a2 so the bound is 2; d = a1 so the bound is 1.
        assert_eq!(model.c_bound(), &Rat::from_int(2));
        assert_eq!(model.d_bound(), &Rat::one());
    }

    #[test]
    fn scaled_transition_row_is_rejected() {
        let mut raw = fixtures::m_unit_raw();
        for rec in &mut raw.transition {
            rec.p = &rec.p * &rat(1, 2);
        }
        match validate_model(&raw) {
            Err(ModelError::RowSum { state, action, total }) => {
                assert_eq!(state, "s0");
                assert_eq!(action.len(), 2);
                assert_eq!(total, rat(1, 2));
            }
            other => panic!("expected RowSum, got {other:?}"),
        }
    }

    #[test]
    fn match_fixture_cost_bound_by_table_scan() {
        let model = fixtures::m_match();
        // Independent oracle: scan the raw cost table for max |c|.
        let raw = fixtures::m_match_raw();
        let mut max = Rat::zero();
        for c in &raw.cost_c {
            max = max.max(c.abs());
        }
        assert_eq!(max, Rat::one());
        assert_eq!(model.c_bound(), &Rat::one());
    }

    #[test]
    fn negative_probability_rejected() {
        let mut raw = fixtures::m_unit_raw();
        raw.initial[0].p = rat(-1, 2);
        assert!(matches!(
            validate_model(&raw),
            Err(ModelError::NegativeProbability { .. })
        ));
    }

    #[test]
    fn kappa_dimension_mismatch_rejected() {
        let mut raw = fixtures::m_unit_raw();
        raw.cost_d[0] = vec![Rat::zero(), Rat::zero()];
        assert!(matches!(
            validate_model(&raw),
            Err(ModelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn serialization_round_trips_exactly() {
        for model in [fixtures::m_unit(), fixtures::m_match()] {
            let json = serde_json::to_string(&model.to_raw()).unwrap();
            let raw: RawModel = serde_json::from_str(&json).unwrap();
            let back = validate_model(&raw).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn truncation_bound_examples() {
        // c bound 1, alpha 1/2, T = 10: (1/2)^10 / (1/2) = 1/512.
        let b = truncation_bound(&Rat::one(), &rat(1, 2), 10).unwrap();
        assert_eq!(b, rat(1, 512));
        // Zero-cost model: bound 0 for any alpha, T.
        let b = truncation_bound(&Rat::zero(), &rat(3, 4), 5).unwrap();
        assert!(b.is_zero());
        // M-match, alpha 3/4, T = 8: (3/4)^8 / (1/4) = 6561/16384.
        let model = fixtures::m_match();
        let b = truncation_bound(model.c_bound(), &rat(3, 4), 8).unwrap();
        assert_eq!(b, rat(6561, 16384));
        // Cross-check against the partial tail sums it must dominate.
        let alpha = rat(3, 4);
        let mut partial = Rat::zero();
        for t in 9..=60 {
            partial += alpha.pow((t - 1) as u32) * model.c_bound();
        }
        assert!(partial < b);
        // The gap is exactly the remaining tail alpha^60 / (1 - alpha).
        assert_eq!(&b - &partial, truncation_bound(model.c_bound(), &alpha, 60).unwrap());
    }

    #[test]
    fn discount_one_has_no_tail_bound() {
        assert!(matches!(
            truncation_bound(&Rat::one(), &Rat::one(), 3),
            Err(ModelError::DiscountIsOne)
        ));
    }

    #[test]
    fn run_config_mass() {
        let cfg = RunConfig::new(3, rat(1, 2)).unwrap();
        assert_eq!(cfg.total_mass(), rat(7, 4));
        let cfg = RunConfig::new(4, Rat::one()).unwrap();
        assert_eq!(cfg.total_mass(), Rat::from_int(4));
        assert!(RunConfig::new(0, Rat::one()).is_err());
        assert!(RunConfig::new(2, rat(3, 2)).is_err());
        assert!(RunConfig::new(2, Rat::zero()).is_err());
    }
}
