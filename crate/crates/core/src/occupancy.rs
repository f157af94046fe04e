//! Occupation measures and policy-independent cost tables on the
//! joint-history space.
//!
//! The measure generated by a policy weights each (t, joint history,
//! joint action) cell with `alpha^(t-1) * P(h_t, a_t)`; its total mass is
//! m(T, alpha) for every policy class. Long-term costs are inner products
//! of the measure with the conditional-cost tables, which depend on the
//! model only (strategic independence), never on the policy.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::enumeration::{HistoryIndex, SizeCaps};
use crate::model::{RunConfig, TeamModel};
use crate::policy::{
    joint_action_kernel, DecentralizedProfile, FiniteMixture, PolicyError, PolicyObject,
};
use crate::rational::Rat;
use crate::simplex::{simplex_solve, Cmp, LpConstraint, LpProblem, LpStatus};

#[derive(Debug, Error)]
pub enum OccupancyError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected a {expected} policy, got {got}")]
    WrongSpace {
        expected: &'static str,
        got: &'static str,
    },
}

/// Which product space a measure lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureSpace {
    /// Keys are (t, joint history id, joint action id).
    JointHistory,
    /// Keys are (t, prescription-observation history id, prescription id).
    Coordination,
}

/// Sparse exact measure; absent cells are zero. Zero weights are never
/// stored, so equal measures compare equal as maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationMeasure {
    pub horizon: usize,
    pub discount: Rat,
    pub space: MeasureSpace,
    pub weights: BTreeMap<(usize, u64, u64), Rat>,
}

impl OccupationMeasure {
    pub fn empty(cfg: &RunConfig, space: MeasureSpace) -> Self {
        OccupationMeasure {
            horizon: cfg.horizon,
            discount: cfg.discount.clone(),
            space,
            weights: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, key: (usize, u64, u64), w: Rat) {
        if w.is_zero() {
            return;
        }
        let entry = self.weights.entry(key).or_default();
        *entry += w;
        if entry.is_zero() {
            self.weights.remove(&key);
        }
    }

    pub fn total_mass(&self) -> Rat {
        self.weights.values().sum()
    }

    /// Adds `w * other` into `self`.
    pub fn add_scaled(&mut self, other: &OccupationMeasure, w: &Rat) {
        for (key, v) in &other.weights {
            self.add(*key, w * v);
        }
    }

    /// First cell where the two measures differ, with both values.
    pub fn first_difference(
        &self,
        other: &OccupationMeasure,
    ) -> Option<((usize, u64, u64), Rat, Rat)> {
        for (key, v) in &self.weights {
            match other.weights.get(key) {
                Some(w) if w == v => {}
                Some(w) => return Some((*key, v.clone(), w.clone())),
                None => return Some((*key, v.clone(), Rat::zero())),
            }
        }
        for (key, w) in &other.weights {
            if !self.weights.contains_key(key) {
                return Some((*key, Rat::zero(), w.clone()));
            }
        }
        None
    }
}

/// (common history id, per-agent private history ids).
pub type HistKey = (u64, Vec<u64>);

/// State-augmented forward weights w_t(h, s) = P(S_t = s, H_t = h) under
/// a behavioral profile, one map per time step.
pub fn forward_state_weights(
    model: &TeamModel,
    index: &HistoryIndex,
    profile: &DecentralizedProfile,
    horizon: usize,
) -> Vec<BTreeMap<HistKey, Vec<Rat>>> {
    let n_states = model.n_states();
    let mut layers = Vec::with_capacity(horizon);
    let mut layer: BTreeMap<HistKey, Vec<Rat>> = BTreeMap::new();
    for e in model.initial_entries() {
        let (common, private) = model.decode_joint_obs(e.obs);
        let privs: Vec<u64> = private.iter().map(|&o| o as u64).collect();
        layer
            .entry((common as u64, privs))
            .or_insert_with(|| vec![Rat::zero(); n_states])[e.state] += &e.prob;
    }
    for t in 1..=horizon {
        if t == horizon {
            layers.push(layer);
            break;
        }
        let mut next: BTreeMap<HistKey, Vec<Rat>> = BTreeMap::new();
        for ((common, privs), states) in &layer {
            let kernel = joint_action_kernel(model, profile, t, *common, privs);
            for (a, pi) in &kernel {
                if pi.is_zero() {
                    continue;
                }
                let parts = model.decode_joint_action(*a);
                for (s, ws) in states.iter().enumerate() {
                    if ws.is_zero() {
                        continue;
                    }
                    let flow = ws * pi;
                    for e in model.transition_row(s, *a) {
                        let (o_common, o_private) = model.decode_joint_obs(e.obs);
                        let common2 = index.extend_common(*common, o_common);
                        let privs2: Vec<u64> = (0..model.n_agents())
                            .map(|n| index.extend_private(n, privs[n], parts[n], o_private[n]))
                            .collect();
                        next.entry((common2, privs2))
                            .or_insert_with(|| vec![Rat::zero(); n_states])[e.next_state] +=
                            &flow * &e.prob;
                    }
                }
            }
        }
        layers.push(layer);
        layer = next;
    }
    layers
}

fn forward_profile(
    model: &TeamModel,
    index: &HistoryIndex,
    profile: &DecentralizedProfile,
    cfg: &RunConfig,
) -> OccupationMeasure {
    let layers = forward_state_weights(model, index, profile, cfg.horizon);
    let mut measure = OccupationMeasure::empty(cfg, MeasureSpace::JointHistory);
    for (t0, layer) in layers.iter().enumerate() {
        let t = t0 + 1;
        let alpha_pow = cfg.discount_pow(t);
        for ((common, privs), states) in layer {
            let mass: Rat = states.iter().sum();
            if mass.is_zero() {
                continue;
            }
            let h = index.encode_joint(t, *common, privs);
            for (a, pi) in joint_action_kernel(model, profile, t, *common, privs) {
                measure.add((t, h, a as u64), &alpha_pow * &pi * &mass);
            }
        }
    }
    measure
}

fn forward_mixture(
    model: &TeamModel,
    index: &HistoryIndex,
    mixture: &FiniteMixture<DecentralizedProfile>,
    cfg: &RunConfig,
) -> OccupationMeasure {
    let parts: Vec<(Rat, OccupationMeasure)> = mixture
        .atoms
        .par_iter()
        .map(|(w, atom)| (w.clone(), forward_profile(model, index, atom, cfg)))
        .collect();
    let mut measure = OccupationMeasure::empty(cfg, MeasureSpace::JointHistory);
    for (w, part) in &parts {
        measure.add_scaled(part, w);
    }
    measure
}

/// Occupation measure of any decentralized policy class. Mixtures combine
/// atom measures linearly; product mixtures are expanded to the joint
/// mixture they induce.
pub fn forward_weights(
    model: &TeamModel,
    index: &HistoryIndex,
    policy: &PolicyObject,
    cfg: &RunConfig,
    caps: &SizeCaps,
) -> Result<OccupationMeasure, OccupancyError> {
    match policy {
        PolicyObject::Dec(profile) => {
            profile.validate(model, cfg.horizon)?;
            Ok(forward_profile(model, index, profile, cfg))
        }
        PolicyObject::MixtureDec(mixture) => {
            mixture.validate_weights()?;
            for (_, atom) in &mixture.atoms {
                atom.validate(model, cfg.horizon)?;
            }
            Ok(forward_mixture(model, index, mixture, cfg))
        }
        PolicyObject::Product(product) => {
            for factor in &product.factors {
                factor.validate_weights()?;
            }
            let joint = product.to_joint_mixture(caps)?;
            for (_, atom) in &joint.atoms {
                atom.validate(model, cfg.horizon)?;
            }
            Ok(forward_mixture(model, index, &joint, cfg))
        }
        PolicyObject::Coord(_) | PolicyObject::MixtureCoord(_) => Err(OccupancyError::WrongSpace {
            expected: "decentralized",
            got: "coordination",
        }),
    }
}

/// Policy-free forward weights: the transition kernel contributions only,
/// with every joint action branched and no policy factor. Normalizing per
/// history yields the policy-independent state belief.
fn policy_free_weights(
    model: &TeamModel,
    index: &HistoryIndex,
    horizon: usize,
) -> Vec<BTreeMap<HistKey, Vec<Rat>>> {
    let n_states = model.n_states();
    let mut layers = Vec::with_capacity(horizon);
    let mut layer: BTreeMap<HistKey, Vec<Rat>> = BTreeMap::new();
    for e in model.initial_entries() {
        let (common, private) = model.decode_joint_obs(e.obs);
        let privs: Vec<u64> = private.iter().map(|&o| o as u64).collect();
        layer
            .entry((common as u64, privs))
            .or_insert_with(|| vec![Rat::zero(); n_states])[e.state] += &e.prob;
    }
    for t in 1..=horizon {
        if t == horizon {
            layers.push(layer);
            break;
        }
        let mut next: BTreeMap<HistKey, Vec<Rat>> = BTreeMap::new();
        for ((common, privs), states) in &layer {
            for a in 0..model.n_joint_actions() {
                let parts = model.decode_joint_action(a);
                for (s, ws) in states.iter().enumerate() {
                    if ws.is_zero() {
                        continue;
                    }
                    for e in model.transition_row(s, a) {
                        let (o_common, o_private) = model.decode_joint_obs(e.obs);
                        let common2 = index.extend_common(*common, o_common);
                        let privs2: Vec<u64> = (0..model.n_agents())
                            .map(|n| index.extend_private(n, privs[n], parts[n], o_private[n]))
                            .collect();
                        next.entry((common2, privs2))
                            .or_insert_with(|| vec![Rat::zero(); n_states])[e.next_state] +=
                            ws * &e.prob;
                    }
                }
            }
        }
        layers.push(layer);
        layer = next;
    }
    layers
}

/// Policy-independent conditional-cost tables: state beliefs per
/// reachable (t, joint history), combined with the immediate cost tables
/// on demand. Unreachable histories evaluate to 0 and are flagged.
#[derive(Debug, Clone)]
pub struct CostTables {
    horizon: usize,
    beliefs: BTreeMap<(usize, u64), Vec<Rat>>,
}

impl CostTables {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_reachable(&self, t: usize, history: u64) -> bool {
        self.beliefs.contains_key(&(t, history))
    }

    pub fn belief(&self, t: usize, history: u64) -> Option<&[Rat]> {
        self.beliefs.get(&(t, history)).map(|b| b.as_slice())
    }

    /// Conditional expected objective cost c_hat(t, h, a).
    pub fn c_hat(&self, model: &TeamModel, t: usize, history: u64, action: u64) -> Rat {
        match self.beliefs.get(&(t, history)) {
            Some(belief) => belief
                .iter()
                .enumerate()
                .map(|(s, p)| p * model.cost_c(s, action as usize))
                .sum(),
            None => Rat::zero(),
        }
    }

    /// Conditional expected constraint cost d_hat_k(t, h, a).
    pub fn d_hat(&self, model: &TeamModel, k: usize, t: usize, history: u64, action: u64) -> Rat {
        match self.beliefs.get(&(t, history)) {
            Some(belief) => belief
                .iter()
                .enumerate()
                .map(|(s, p)| p * &model.cost_d(s, action as usize)[k])
                .sum(),
            None => Rat::zero(),
        }
    }
}

/// Builds the belief tables from the policy-free recursion.
pub fn cost_tables(model: &TeamModel, index: &HistoryIndex, horizon: usize) -> CostTables {
    let layers = policy_free_weights(model, index, horizon);
    let mut beliefs = BTreeMap::new();
    for (t0, layer) in layers.iter().enumerate() {
        let t = t0 + 1;
        for ((common, privs), states) in layer {
            let mass: Rat = states.iter().sum();
            if mass.is_zero() {
                continue;
            }
            let h = index.encode_joint(t, *common, privs);
            beliefs.insert((t, h), states.iter().map(|w| w / &mass).collect());
        }
    }
    CostTables { horizon, beliefs }
}

/// Long-term costs as exact inner products <measure, c_hat> and
/// <measure, d_hat_k>.
pub fn long_term_costs(
    model: &TeamModel,
    measure: &OccupationMeasure,
    tables: &CostTables,
) -> Result<(Rat, Vec<Rat>), OccupancyError> {
    if measure.space != MeasureSpace::JointHistory {
        return Err(OccupancyError::WrongSpace {
            expected: "joint-history measure",
            got: "coordination measure",
        });
    }
    if measure.horizon > tables.horizon {
        return Err(OccupancyError::DimensionMismatch(format!(
            "measure horizon {} exceeds table horizon {}",
            measure.horizon, tables.horizon
        )));
    }
    let k = model.n_constraints();
    let mut c = Rat::zero();
    let mut d = vec![Rat::zero(); k];
    for ((t, h, a), w) in &measure.weights {
        c += w * tables.c_hat(model, *t, *h, *a);
        for (i, dk) in d.iter_mut().enumerate() {
            *dk += w * tables.d_hat(model, i, *t, *h, *a);
        }
    }
    Ok((c, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominanceMode {
    /// Every target must be exactly one of the reference measures.
    Exact,
    /// Every target must lie in the convex hull of the references.
    ConvexHull,
}

#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub mode: DominanceMode,
    pub dominated: bool,
    /// Per target: whether it is covered.
    pub per_target: Vec<bool>,
}

/// Checks whether the measure set `targets` is dominated by `references`,
/// exactly or through exact convex combinations.
pub fn dominance_check(
    references: &[OccupationMeasure],
    targets: &[OccupationMeasure],
    mode: DominanceMode,
) -> DominanceReport {
    let per_target: Vec<bool> = targets
        .iter()
        .map(|b| match mode {
            DominanceMode::Exact => references.iter().any(|a| a == b),
            DominanceMode::ConvexHull => in_convex_hull(references, b),
        })
        .collect();
    DominanceReport {
        mode,
        dominated: per_target.iter().all(|&x| x),
        per_target,
    }
}

fn in_convex_hull(references: &[OccupationMeasure], target: &OccupationMeasure) -> bool {
    if references.is_empty() {
        return false;
    }
    // Keys appearing anywhere; the target must match on all of them.
    let mut keys: BTreeMap<(usize, u64, u64), usize> = BTreeMap::new();
    for m in references.iter().chain(std::iter::once(target)) {
        for key in m.weights.keys() {
            let next = keys.len();
            keys.entry(*key).or_insert(next);
        }
    }
    let mut constraints: Vec<LpConstraint> = Vec::with_capacity(keys.len() + 1);
    for (key, _) in &keys {
        let coeffs: Vec<(usize, Rat)> = references
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.weights.get(key).map(|w| (i, w.clone())))
            .collect();
        let rhs = target.weights.get(key).cloned().unwrap_or_else(Rat::zero);
        constraints.push(LpConstraint {
            coeffs,
            cmp: Cmp::Eq,
            rhs,
        });
    }
    constraints.push(LpConstraint {
        coeffs: (0..references.len()).map(|i| (i, Rat::one())).collect(),
        cmp: Cmp::Eq,
        rhs: Rat::one(),
    });
    let lp = LpProblem {
        n_vars: references.len(),
        objective: vec![Rat::zero(); references.len()],
        constraints,
    };
    matches!(
        simplex_solve(&lp).map(|s| s.status),
        Ok(LpStatus::Optimal)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::SizeCaps;
    use crate::fixtures;
    use crate::policy::{uniform_profile, DecisionRule};
    use crate::rational::rat;

    fn pure_profile_unit(model: &TeamModel, index: &HistoryIndex, action: usize, horizon: usize) -> DecentralizedProfile {
        let mut p = uniform_profile(model, horizon);
        for agent in 0..model.n_agents() {
            for t in 1..=horizon {
                for &cell in index.reachable_cells(agent, t) {
                    p.agents[agent].rules[t - 1]
                        .entries
                        .insert(cell, vec![(action, Rat::one())]);
                }
            }
        }
        p
    }

    #[test]
    fn unit_uniform_measure_and_mass() {
        let model = fixtures::m_unit();
        let index = HistoryIndex::build(&model, 2, &SizeCaps::default()).unwrap();
        let cfg = RunConfig::new(2, Rat::one()).unwrap();
        let measure = forward_weights(
            &model,
            &index,
            &PolicyObject::Dec(uniform_profile(&model, 2)),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        // t=1: one history, four joint actions of mass 1/4 each.
        for a in 0..4u64 {
            assert_eq!(measure.weights[&(1, 0, a)], rat(1, 4));
        }
        assert_eq!(measure.total_mass(), Rat::from_int(2));
    }

    #[test]
    fn pure_profile_one_step_is_unit_mass_per_initial_observation() {
        let model = fixtures::m_match();
        let index = HistoryIndex::build(&model, 1, &SizeCaps::default()).unwrap();
        let cfg = RunConfig::new(1, Rat::one()).unwrap();
        let profile = pure_profile_unit(&model, &index, 1, 1);
        let measure = forward_weights(
            &model,
            &index,
            &PolicyObject::Dec(profile),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        // Two reachable joint histories at t=1 (agent 1's two symbols),
        // each carrying its initial-observation marginal on action (1,1).
        assert_eq!(measure.weights.len(), 2);
        let a11 = model.joint_action_id(&[1, 1]) as u64;
        for ((_, _, a), w) in &measure.weights {
            assert_eq!(*a, a11);
            assert_eq!(w, &rat(1, 2));
        }
        assert_eq!(measure.total_mass(), Rat::one());
    }

    #[test]
    fn mixture_measures_combine_linearly() {
        let model = fixtures::m_unit();
        let index = HistoryIndex::build(&model, 2, &SizeCaps::default()).unwrap();
        let cfg = RunConfig::new(2, rat(1, 2)).unwrap();
        let caps = SizeCaps::default();
        let u0 = pure_profile_unit(&model, &index, 0, 2);
        let u1 = pure_profile_unit(&model, &index, 1, 2);
        let m0 = forward_weights(&model, &index, &PolicyObject::Dec(u0.clone()), &cfg, &caps).unwrap();
        let m1 = forward_weights(&model, &index, &PolicyObject::Dec(u1.clone()), &cfg, &caps).unwrap();
        let mixture = FiniteMixture {
            atoms: vec![(rat(1, 3), u0), (rat(2, 3), u1)],
        };
        let mixed =
            forward_weights(&model, &index, &PolicyObject::MixtureDec(mixture), &cfg, &caps)
                .unwrap();
        let mut expected = OccupationMeasure::empty(&cfg, MeasureSpace::JointHistory);
        expected.add_scaled(&m0, &rat(1, 3));
        expected.add_scaled(&m1, &rat(2, 3));
        assert_eq!(mixed, expected);
        assert_eq!(mixed.total_mass(), rat(3, 2));
    }

    #[test]
    fn unit_cost_tables_are_degenerate_belief() {
        let model = fixtures::m_unit();
        let index = HistoryIndex::build(&model, 2, &SizeCaps::default()).unwrap();
        let tables = cost_tables(&model, &index, 2);
        for a in 0..4u64 {
            assert_eq!(tables.c_hat(&model, 1, 0, a), model.cost_c(0, a as usize).clone());
        }
    }

    #[test]
    fn match_belief_after_observation_by_hand_bayes() {
        // Uniform prior, channel correct w.p. 3/4: seeing o1 gives belief
        // (1/4, 3/4); c_hat mixes the two state rows accordingly.
        let model = fixtures::m_match();
        let index = HistoryIndex::build(&model, 1, &SizeCaps::default()).unwrap();
        let tables = cost_tables(&model, &index, 1);
        // Joint history at t=1 with agent-1 observation o1: common 0,
        // privs (1, 0).
        let h = index.encode_joint(1, 0, &[1, 0]);
        assert_eq!(tables.belief(1, h).unwrap(), &[rat(1, 4), rat(3, 4)]);
        for a in 0..4u64 {
            let expected = rat(1, 4) * model.cost_c(0, a as usize)
                + rat(3, 4) * model.cost_c(1, a as usize);
            assert_eq!(tables.c_hat(&model, 1, h, a), expected);
        }
    }

    #[test]
    fn zero_cost_model_has_zero_long_term_costs() {
        let mut raw = fixtures::m_unit_raw();
        for c in &mut raw.cost_c {
            *c = Rat::zero();
        }
        for d in &mut raw.cost_d {
            d[0] = Rat::zero();
        }
        let model = crate::model::validate_model(&raw).unwrap();
        let index = HistoryIndex::build(&model, 2, &SizeCaps::default()).unwrap();
        let cfg = RunConfig::new(2, Rat::one()).unwrap();
        let tables = cost_tables(&model, &index, 2);
        let measure = forward_weights(
            &model,
            &index,
            &PolicyObject::Dec(uniform_profile(&model, 2)),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        let (c, d) = long_term_costs(&model, &measure, &tables).unwrap();
        assert!(c.is_zero());
        assert!(d[0].is_zero());
    }

    #[test]
    fn unit_expected_cost_one_step() {
        // c = a1 + a2 under uniform agents: C = (0+1+1+2)/4 = 1.
        let model = fixtures::m_unit();
        let index = HistoryIndex::build(&model, 1, &SizeCaps::default()).unwrap();
        let cfg = RunConfig::new(1, Rat::one()).unwrap();
        let tables = cost_tables(&model, &index, 1);
        let measure = forward_weights(
            &model,
            &index,
            &PolicyObject::Dec(uniform_profile(&model, 1)),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        let (c, d) = long_term_costs(&model, &measure, &tables).unwrap();
        assert_eq!(c, Rat::one());
        assert_eq!(d, vec![rat(1, 2)]);
    }

    #[test]
    fn dominance_subset_and_hull() {
        let model = fixtures::m_unit();
        let index = HistoryIndex::build(&model, 1, &SizeCaps::default()).unwrap();
        let cfg = RunConfig::new(1, Rat::one()).unwrap();
        let caps = SizeCaps::default();
        let m0 = forward_weights(
            &model,
            &index,
            &PolicyObject::Dec(pure_profile_unit(&model, &index, 0, 1)),
            &cfg,
            &caps,
        )
        .unwrap();
        let m1 = forward_weights(
            &model,
            &index,
            &PolicyObject::Dec(pure_profile_unit(&model, &index, 1, 1)),
            &cfg,
            &caps,
        )
        .unwrap();
        let refs = vec![m0.clone(), m1.clone()];
        // Subset: trivially dominated in exact mode.
        let report = dominance_check(&refs, &[m0.clone()], DominanceMode::Exact);
        assert!(report.dominated);
        // A strict mixture is in the hull but not pointwise present.
        let mut mid = OccupationMeasure::empty(&cfg, MeasureSpace::JointHistory);
        mid.add_scaled(&m0, &rat(1, 2));
        mid.add_scaled(&m1, &rat(1, 2));
        let exact = dominance_check(&refs, &[mid.clone()], DominanceMode::Exact);
        assert!(!exact.dominated);
        let hull = dominance_check(&refs, &[mid], DominanceMode::ConvexHull);
        assert!(hull.dominated);
    }
}
