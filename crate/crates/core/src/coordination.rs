//! The coordinated system: occupation measures over prescription space,
//! the policy-independent common-observation kernel and cost tables, the
//! projection back to joint-history measures, and the extraction of a
//! behavioral coordination policy from a measure.
//!
//! The latent state of every recursion here is (s, h^{1:N}): with the
//! prescription-observation history attached, the lift is a single-agent
//! system whose kernels stay exactly computable.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::enumeration::{HistoryIndex, IndexError, PrescriptionIndex, SizeCaps};
use crate::model::{RunConfig, TeamModel};
use crate::occupancy::{MeasureSpace, OccupationMeasure};
use crate::policy::{CoordRule, CoordinationPolicy, FiniteMixture, PolicyError, PolicyObject};
use crate::rational::Rat;

#[derive(Debug, Error)]
pub enum CoordError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("expected a coordination policy")]
    WrongPolicyClass,
    #[error("expected a coordination-space measure")]
    WrongMeasureSpace,
    #[error("flow violation at t={t}, history {ph}, prescription {gamma}, next obs {obs}: outflow {lhs}, expected {rhs}")]
    FlowViolation {
        t: usize,
        ph: u64,
        gamma: u64,
        obs: usize,
        lhs: Rat,
        rhs: Rat,
    },
    #[error("initial mass at common observation {obs} is {lhs}, expected {rhs}")]
    InitialMassViolation { obs: usize, lhs: Rat, rhs: Rat },
    #[error("measure places mass on unreachable history {ph} at t={t}")]
    UnreachableHistory { t: usize, ph: u64 },
}

/// Unnormalized weights over (private-history tuple, state) attached to
/// one prescription-observation history. Dividing by `mass` gives the
/// policy-independent conditional law given that history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoordNode {
    pub weights: BTreeMap<(Vec<u64>, usize), Rat>,
}

impl CoordNode {
    pub fn mass(&self) -> Rat {
        self.weights.values().sum()
    }
}

/// Initial node per first common observation.
fn initial_nodes(model: &TeamModel) -> BTreeMap<usize, CoordNode> {
    let mut out: BTreeMap<usize, CoordNode> = BTreeMap::new();
    for e in model.initial_entries() {
        let (common, private) = model.decode_joint_obs(e.obs);
        let privs: Vec<u64> = private.iter().map(|&o| o as u64).collect();
        *out.entry(common)
            .or_default()
            .weights
            .entry((privs, e.state))
            .or_default() += &e.prob;
    }
    out
}

/// Marginal law of the first common observation.
pub fn initial_common_marginal(model: &TeamModel) -> BTreeMap<usize, Rat> {
    initial_nodes(model)
        .into_iter()
        .map(|(o, node)| (o, node.mass()))
        .collect()
}

/// Pushes a node one step forward under a fixed joint prescription,
/// splitting the result by the next common observation.
fn extend_node(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    t: usize,
    node: &CoordNode,
    gamma: u64,
) -> BTreeMap<usize, CoordNode> {
    let parts = presc.decode_joint_presc(t, gamma);
    let mut out: BTreeMap<usize, CoordNode> = BTreeMap::new();
    for ((privs, s), w) in &node.weights {
        let actions: Vec<usize> = (0..model.n_agents())
            .map(|agent| presc.apply_agent(t, agent, parts[agent], privs[agent]))
            .collect();
        let a = model.joint_action_id(&actions);
        for e in model.transition_row(*s, a) {
            let (o_common, o_private) = model.decode_joint_obs(e.obs);
            let privs2: Vec<u64> = (0..model.n_agents())
                .map(|agent| index.extend_private(agent, privs[agent], actions[agent], o_private[agent]))
                .collect();
            *out.entry(o_common)
                .or_default()
                .weights
                .entry((privs2, e.next_state))
                .or_default() += w * &e.prob;
        }
    }
    out
}

/// Builds the policy-free nodes for a set of (t, history) keys and all
/// their ancestors, bottom-up along decoded paths.
fn build_nodes_for(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    keys: &BTreeSet<(usize, u64)>,
) -> BTreeMap<(usize, u64), CoordNode> {
    let mut wanted: BTreeSet<(usize, u64)> = BTreeSet::new();
    for &(t, ph) in keys {
        let (obs, prescs) = presc.decode_ph(t, ph);
        let mut cur = presc.ph_initial(obs[0]);
        wanted.insert((1, cur));
        for step in 1..t {
            cur = presc.extend_ph(step, cur, prescs[step - 1], obs[step]);
            wanted.insert((step + 1, cur));
        }
    }
    let init = initial_nodes(model);
    let mut nodes: BTreeMap<(usize, u64), CoordNode> = BTreeMap::new();
    for &(t, ph) in &wanted {
        if t == 1 {
            let obs = ph as usize;
            nodes.insert((t, ph), init.get(&obs).cloned().unwrap_or_default());
        } else {
            let (obs, prescs) = presc.decode_ph(t, ph);
            // Parent id: strip the last (prescription, observation) pair.
            let mut parent = presc.ph_initial(obs[0]);
            for step in 1..t - 1 {
                parent = presc.extend_ph(step, parent, prescs[step - 1], obs[step]);
            }
            let parent_node = nodes.get(&(t - 1, parent)).cloned().unwrap_or_default();
            let extended = extend_node(model, index, presc, t - 1, &parent_node, prescs[t - 2]);
            nodes.insert(
                (t, ph),
                extended.get(&obs[t - 1]).cloned().unwrap_or_default(),
            );
        }
    }
    nodes
}

/// The reachable coordinated tree up to a horizon, branching over every
/// joint prescription: the basis for the LP, the dual DP, and the
/// exported kernel/cost tables.
#[derive(Debug, Clone)]
pub struct CoordinatedSystem {
    pub horizon: usize,
    /// [t-1] -> reachable prescription-observation histories, sorted.
    pub layers: Vec<Vec<u64>>,
    pub nodes: BTreeMap<(usize, u64), CoordNode>,
}

impl CoordinatedSystem {
    pub fn build(
        model: &TeamModel,
        index: &HistoryIndex,
        presc: &PrescriptionIndex,
        horizon: usize,
        caps: &SizeCaps,
    ) -> Result<Self, CoordError> {
        let mut layers: Vec<Vec<u64>> = Vec::with_capacity(horizon);
        let mut nodes: BTreeMap<(usize, u64), CoordNode> = BTreeMap::new();
        let mut layer: BTreeMap<u64, CoordNode> = initial_nodes(model)
            .into_iter()
            .map(|(o, node)| (presc.ph_initial(o), node))
            .collect();
        let mut cells: u128 = 0;
        for t in 1..=horizon {
            layers.push(layer.keys().copied().collect());
            cells += layer.len() as u128 * presc.joint_card(t);
            if cells > caps.max_enumerable as u128 {
                return Err(CoordError::Index(IndexError::SizeLimitExceeded {
                    space: "coordinated tree cells".to_string(),
                    t,
                    cardinality: num_bigint::BigUint::from(cells),
                    cap: caps.max_enumerable as u128,
                }));
            }
            let gammas = presc.enumerate_joint(t, caps)?;
            let mut next: BTreeMap<u64, CoordNode> = BTreeMap::new();
            for (&ph, node) in &layer {
                nodes.insert((t, ph), node.clone());
                if t == horizon {
                    continue;
                }
                for &gamma in &gammas {
                    for (o_common, child) in extend_node(model, index, presc, t, node, gamma) {
                        let ph2 = presc.extend_ph(t, ph, gamma, o_common);
                        let entry = next.entry(ph2).or_default();
                        for (key, w) in child.weights {
                            *entry.weights.entry(key).or_default() += w;
                        }
                    }
                }
            }
            layer = next;
        }
        Ok(CoordinatedSystem {
            horizon,
            layers,
            nodes,
        })
    }

    pub fn node(&self, t: usize, ph: u64) -> Option<&CoordNode> {
        self.nodes.get(&(t, ph))
    }
}

/// P~(o0' | h~, G): conditional law of the next common observation given
/// the prescription history and prescription. Policy-independent; rows
/// sum to one at reachable cells.
pub fn kernel_row(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    node: &CoordNode,
    t: usize,
    gamma: u64,
) -> Vec<(usize, Rat)> {
    let mass = node.mass();
    if mass.is_zero() {
        return Vec::new();
    }
    extend_node(model, index, presc, t, node, gamma)
        .into_iter()
        .map(|(o, child)| (o, child.mass() / &mass))
        .filter(|(_, p)| !p.is_zero())
        .collect()
}

/// c~(t, h~, G) and the constraint analogues: conditional expected
/// immediate costs when all agents follow the prescription.
pub fn expected_costs(
    model: &TeamModel,
    presc: &PrescriptionIndex,
    node: &CoordNode,
    t: usize,
    gamma: u64,
) -> (Rat, Vec<Rat>) {
    let mass = node.mass();
    let k = model.n_constraints();
    if mass.is_zero() {
        return (Rat::zero(), vec![Rat::zero(); k]);
    }
    let parts = presc.decode_joint_presc(t, gamma);
    let mut c = Rat::zero();
    let mut d = vec![Rat::zero(); k];
    for ((privs, s), w) in &node.weights {
        let actions: Vec<usize> = (0..model.n_agents())
            .map(|agent| presc.apply_agent(t, agent, parts[agent], privs[agent]))
            .collect();
        let a = model.joint_action_id(&actions);
        c += w * model.cost_c(*s, a);
        for (i, dk) in d.iter_mut().enumerate() {
            *dk += w * &model.cost_d(*s, a)[i];
        }
    }
    c = c / &mass;
    for dk in d.iter_mut() {
        *dk = dk.clone() / &mass;
    }
    (c, d)
}

/// Full common-observation kernel over the reachable coordinated tree.
pub fn common_obs_kernel(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    system: &CoordinatedSystem,
    caps: &SizeCaps,
) -> Result<BTreeMap<(usize, u64, u64), Vec<(usize, Rat)>>, CoordError> {
    let mut out = BTreeMap::new();
    for t in 1..=system.horizon {
        let gammas = presc.enumerate_joint(t, caps)?;
        for &ph in &system.layers[t - 1] {
            let node = &system.nodes[&(t, ph)];
            for &gamma in &gammas {
                out.insert((t, ph, gamma), kernel_row(model, index, presc, node, t, gamma));
            }
        }
    }
    Ok(out)
}

/// Full c~ and d~ tables over the reachable coordinated tree.
pub fn coordination_cost_tables(
    model: &TeamModel,
    presc: &PrescriptionIndex,
    system: &CoordinatedSystem,
    caps: &SizeCaps,
) -> Result<BTreeMap<(usize, u64, u64), (Rat, Vec<Rat>)>, CoordError> {
    let mut out = BTreeMap::new();
    for t in 1..=system.horizon {
        let gammas = presc.enumerate_joint(t, caps)?;
        for &ph in &system.layers[t - 1] {
            let node = &system.nodes[&(t, ph)];
            for &gamma in &gammas {
                out.insert(
                    (t, ph, gamma),
                    expected_costs(model, presc, node, t, gamma),
                );
            }
        }
    }
    Ok(out)
}

fn coordinated_forward_single(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    policy: &CoordinationPolicy,
    cfg: &RunConfig,
    caps: &SizeCaps,
) -> Result<OccupationMeasure, CoordError> {
    policy.validate(presc, cfg.horizon)?;
    let mut measure = OccupationMeasure::empty(cfg, MeasureSpace::Coordination);
    let mut layer: BTreeMap<u64, CoordNode> = initial_nodes(model)
        .into_iter()
        .map(|(o, node)| (presc.ph_initial(o), node))
        .collect();
    for t in 1..=cfg.horizon {
        let alpha_pow = cfg.discount_pow(t);
        let mut next: BTreeMap<u64, CoordNode> = BTreeMap::new();
        for (&ph, node) in &layer {
            let mass = node.mass();
            if mass.is_zero() {
                continue;
            }
            let distr = policy.distr(t, ph, presc, caps)?;
            for (gamma, vw) in distr.iter() {
                measure.add((t, ph, *gamma), &alpha_pow * vw * &mass);
                if t == cfg.horizon {
                    continue;
                }
                for (o_common, child) in extend_node(model, index, presc, t, node, *gamma) {
                    let ph2 = presc.extend_ph(t, ph, *gamma, o_common);
                    let entry = next.entry(ph2).or_default();
                    for (key, w) in child.weights {
                        *entry.weights.entry(key).or_default() += vw * w;
                    }
                }
            }
        }
        layer = next;
    }
    Ok(measure)
}

/// Occupation measure of a coordination policy or a mixture of them,
/// over (t, prescription-observation history, prescription) cells.
pub fn coordinated_forward(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    policy: &PolicyObject,
    cfg: &RunConfig,
    caps: &SizeCaps,
) -> Result<OccupationMeasure, CoordError> {
    match policy {
        PolicyObject::Coord(v) => coordinated_forward_single(model, index, presc, v, cfg, caps),
        PolicyObject::MixtureCoord(mixture) => {
            mixture.validate_weights()?;
            let parts: Vec<Result<(Rat, OccupationMeasure), CoordError>> = mixture
                .atoms
                .par_iter()
                .map(|(w, atom)| {
                    Ok((
                        w.clone(),
                        coordinated_forward_single(model, index, presc, atom, cfg, caps)?,
                    ))
                })
                .collect();
            let mut measure = OccupationMeasure::empty(cfg, MeasureSpace::Coordination);
            for part in parts {
                let (w, m) = part?;
                measure.add_scaled(&m, &w);
            }
            Ok(measure)
        }
        _ => Err(CoordError::WrongPolicyClass),
    }
}

/// Pushes a coordination-space measure down to the joint-history space:
/// every (t, h~, G) cell spreads over the private-history tuples it can
/// carry, with the policy-independent conditional law, landing on the
/// joint action the prescription induces. Mass is preserved.
pub fn project_to_joint(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    measure: &OccupationMeasure,
) -> Result<OccupationMeasure, CoordError> {
    if measure.space != MeasureSpace::Coordination {
        return Err(CoordError::WrongMeasureSpace);
    }
    let keys: BTreeSet<(usize, u64)> = measure.weights.keys().map(|&(t, ph, _)| (t, ph)).collect();
    let nodes = build_nodes_for(model, index, presc, &keys);
    let cfg = RunConfig {
        horizon: measure.horizon,
        discount: measure.discount.clone(),
    };
    let mut out = OccupationMeasure::empty(&cfg, MeasureSpace::JointHistory);
    for ((t, ph, gamma), q) in &measure.weights {
        let node = &nodes[&(*t, *ph)];
        let mass = node.mass();
        if mass.is_zero() {
            return Err(CoordError::UnreachableHistory { t: *t, ph: *ph });
        }
        let common = presc.ph_common(*t, *ph);
        let parts = presc.decode_joint_presc(*t, *gamma);
        // Group (privs, state) weights by privs: states marginalize out.
        let mut by_privs: BTreeMap<&Vec<u64>, Rat> = BTreeMap::new();
        for ((privs, _), w) in &node.weights {
            *by_privs.entry(privs).or_default() += w;
        }
        for (privs, w) in by_privs {
            let actions: Vec<usize> = (0..model.n_agents())
                .map(|agent| presc.apply_agent(*t, agent, parts[agent], privs[agent]))
                .collect();
            let a = model.joint_action_id(&actions) as u64;
            let h = index.encode_joint(*t, common, privs);
            out.add((*t, h, a), q * w / &mass);
        }
    }
    Ok(out)
}

/// Long-term costs of a coordination measure: inner products with the
/// c~ / d~ tables along the measure's support.
pub fn coord_long_term_costs(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    measure: &OccupationMeasure,
) -> Result<(Rat, Vec<Rat>), CoordError> {
    if measure.space != MeasureSpace::Coordination {
        return Err(CoordError::WrongMeasureSpace);
    }
    let keys: BTreeSet<(usize, u64)> = measure.weights.keys().map(|&(t, ph, _)| (t, ph)).collect();
    let nodes = build_nodes_for(model, index, presc, &keys);
    let mut c = Rat::zero();
    let mut d = vec![Rat::zero(); model.n_constraints()];
    for ((t, ph, gamma), q) in &measure.weights {
        let node = &nodes[&(*t, *ph)];
        if node.mass().is_zero() {
            return Err(CoordError::UnreachableHistory { t: *t, ph: *ph });
        }
        let (ct, dt) = expected_costs(model, presc, node, *t, *gamma);
        c += q * ct;
        for (i, dk) in d.iter_mut().enumerate() {
            *dk += q * &dt[i];
        }
    }
    Ok((c, d))
}

/// Extracts the behavioral coordination policy whose forward measure
/// reproduces the input exactly. The input must satisfy the initial-mass
/// and flow identities; the first violated cell is reported otherwise.
/// Histories with zero mass keep no entry and behave as uniform.
pub fn measure_to_policy(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    measure: &OccupationMeasure,
) -> Result<CoordinationPolicy, CoordError> {
    if measure.space != MeasureSpace::Coordination {
        return Err(CoordError::WrongMeasureSpace);
    }
    let horizon = measure.horizon;
    let keys: BTreeSet<(usize, u64)> = measure.weights.keys().map(|&(t, ph, _)| (t, ph)).collect();
    let nodes = build_nodes_for(model, index, presc, &keys);

    // Node masses per (t, h~): total measure mass must equal
    // alpha^(t-1) * P(h~).
    let mut history_mass: BTreeMap<(usize, u64), Rat> = BTreeMap::new();
    for ((t, ph, _), q) in &measure.weights {
        *history_mass.entry((*t, *ph)).or_default() += q;
    }

    // Initial layer: sum over prescriptions at each first common
    // observation must equal the initial common marginal.
    let marginal = initial_common_marginal(model);
    for (o, p) in &marginal {
        let got = history_mass
            .get(&(1, presc.ph_initial(*o)))
            .cloned()
            .unwrap_or_else(Rat::zero);
        if &got != p {
            return Err(CoordError::InitialMassViolation {
                obs: *o,
                lhs: got,
                rhs: p.clone(),
            });
        }
    }
    for (&(t, ph), mass) in &history_mass {
        if t == 1 {
            let o = ph as usize;
            if !marginal.contains_key(&o) && !mass.is_zero() {
                return Err(CoordError::InitialMassViolation {
                    obs: o,
                    lhs: mass.clone(),
                    rhs: Rat::zero(),
                });
            }
        }
    }

    // Flow: for every support cell (t, h~, G) and every next common
    // observation, the mass entering the extension must match
    // alpha * q(t, h~, G) * P~(o0' | h~, G).
    for ((t, ph, gamma), q) in &measure.weights {
        let t = *t;
        if t >= horizon {
            continue;
        }
        let node = &nodes[&(t, *ph)];
        if node.mass().is_zero() {
            return Err(CoordError::UnreachableHistory { t, ph: *ph });
        }
        let row = kernel_row(model, index, presc, node, t, *gamma);
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for (o, p) in &row {
            seen.insert(*o);
            let child = presc.extend_ph(t, *ph, *gamma, *o);
            let lhs = history_mass
                .get(&(t + 1, child))
                .cloned()
                .unwrap_or_else(Rat::zero);
            let rhs = &measure.discount * q * p;
            if lhs != rhs {
                return Err(CoordError::FlowViolation {
                    t,
                    ph: *ph,
                    gamma: *gamma,
                    obs: *o,
                    lhs,
                    rhs,
                });
            }
        }
        // Zero-kernel extensions must carry no mass.
        for o in 0..model.n_common_obs() {
            if seen.contains(&o) {
                continue;
            }
            let child = presc.extend_ph(t, *ph, *gamma, o);
            if let Some(mass) = history_mass.get(&(t + 1, child)) {
                if !mass.is_zero() {
                    return Err(CoordError::FlowViolation {
                        t,
                        ph: *ph,
                        gamma: *gamma,
                        obs: o,
                        lhs: mass.clone(),
                        rhs: Rat::zero(),
                    });
                }
            }
        }
    }
    // Support at t+1 must decompose into support at t. Any orphan child
    // fails the corresponding flow equation above unless its parent cell
    // is absent entirely; catch that case here.
    for &(t, ph) in &keys {
        if t == 1 {
            continue;
        }
        let (obs, prescs) = presc.decode_ph(t, ph);
        let mut parent = presc.ph_initial(obs[0]);
        for step in 1..t - 1 {
            parent = presc.extend_ph(step, parent, prescs[step - 1], obs[step]);
        }
        let parent_gamma = prescs[t - 2];
        if !measure.weights.contains_key(&(t - 1, parent, parent_gamma)) {
            return Err(CoordError::FlowViolation {
                t: t - 1,
                ph: parent,
                gamma: parent_gamma,
                obs: obs[t - 1],
                lhs: history_mass[&(t, ph)].clone(),
                rhs: Rat::zero(),
            });
        }
    }

    let mut rules = vec![CoordRule::default(); horizon];
    let mut grouped: BTreeMap<(usize, u64), Vec<(u64, Rat)>> = BTreeMap::new();
    for ((t, ph, gamma), q) in &measure.weights {
        grouped.entry((*t, *ph)).or_default().push((*gamma, q.clone()));
    }
    for ((t, ph), entries) in grouped {
        let total: Rat = entries.iter().map(|(_, q)| q).sum();
        if total.is_zero() {
            continue;
        }
        let distr: Vec<(u64, Rat)> = entries
            .into_iter()
            .map(|(g, q)| (g, q / &total))
            .collect();
        rules[t - 1].entries.insert(ph, distr);
    }
    Ok(CoordinationPolicy { rules })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::DomainMode;
    use crate::fixtures;
    use crate::rational::rat;

    fn setup(
        model: &TeamModel,
        horizon: usize,
        mode: DomainMode,
    ) -> (HistoryIndex, PrescriptionIndex) {
        let caps = SizeCaps::default();
        let index = HistoryIndex::build(model, horizon, &caps).unwrap();
        let presc = PrescriptionIndex::build(model, &index, horizon, mode, &caps).unwrap();
        (index, presc)
    }

    fn pure_policy_on_path(
        model: &TeamModel,
        index: &HistoryIndex,
        presc: &PrescriptionIndex,
        horizon: usize,
        pick: impl Fn(usize, u64) -> u64,
    ) -> CoordinationPolicy {
        // Walk the reachable tree assigning one prescription per node.
        let mut rules = vec![CoordRule::default(); horizon];
        let mut layer: Vec<(u64, CoordNode)> = initial_nodes(model)
            .into_iter()
            .map(|(o, n)| (presc.ph_initial(o), n))
            .collect();
        for t in 1..=horizon {
            let mut next = Vec::new();
            for (ph, node) in &layer {
                let gamma = pick(t, *ph);
                rules[t - 1].entries.insert(*ph, vec![(gamma, Rat::one())]);
                if t < horizon {
                    for (o, child) in extend_node(model, index, presc, t, node, gamma) {
                        next.push((presc.extend_ph(t, *ph, gamma, o), child));
                    }
                }
            }
            layer = next;
        }
        CoordinationPolicy { rules }
    }

    #[test]
    fn unit_pure_policy_has_unit_path_masses() {
        let model = fixtures::m_unit();
        let (index, presc) = setup(&model, 3, DomainMode::Full);
        let cfg = RunConfig::new(3, rat(1, 2)).unwrap();
        let policy = pure_policy_on_path(&model, &index, &presc, 3, |_, _| 0);
        let measure = coordinated_forward(
            &model,
            &index,
            &presc,
            &PolicyObject::Coord(policy),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        // Singleton observations: exactly one cell per t with mass
        // alpha^(t-1).
        assert_eq!(measure.weights.len(), 3);
        let masses: Vec<Rat> = measure.weights.values().cloned().collect();
        assert_eq!(masses, vec![Rat::one(), rat(1, 2), rat(1, 4)]);
        assert_eq!(measure.total_mass(), cfg.total_mass());
    }

    #[test]
    fn match_uniform_coordinator_splits_evenly() {
        let model = fixtures::m_match();
        let (index, presc) = setup(&model, 1, DomainMode::Full);
        let cfg = RunConfig::new(1, Rat::one()).unwrap();
        // No entries: the rule falls back to uniform over all 8 joint
        // prescriptions at t=1.
        let policy = CoordinationPolicy {
            rules: vec![CoordRule::default()],
        };
        let measure = coordinated_forward(
            &model,
            &index,
            &presc,
            &PolicyObject::Coord(policy),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        assert_eq!(presc.joint_card(1), 8);
        assert_eq!(measure.weights.len(), 8);
        for w in measure.weights.values() {
            assert_eq!(w, &rat(1, 8));
        }
        assert_eq!(measure.total_mass(), Rat::one());
    }

    #[test]
    fn kernel_is_one_for_singleton_common_obs() {
        for model in [fixtures::m_unit(), fixtures::m_match()] {
            let (index, presc) = setup(&model, 2, DomainMode::Full);
            let system =
                CoordinatedSystem::build(&model, &index, &presc, 2, &SizeCaps::default()).unwrap();
            let kernel = common_obs_kernel(&model, &index, &presc, &system, &SizeCaps::default())
                .unwrap();
            for ((_, _, _), row) in &kernel {
                if row.is_empty() {
                    continue;
                }
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].1, Rat::one());
            }
        }
    }

    #[test]
    fn signal_kernel_matches_hand_bayes() {
        // The common observation announces the state, so after o0 = z0
        // the belief is degenerate at s0 and the kernel row equals the
        // state-transition marginal under the prescribed joint action.
        let model = fixtures::m_signal();
        let (index, presc) = setup(&model, 2, DomainMode::Full);
        let system =
            CoordinatedSystem::build(&model, &index, &presc, 2, &SizeCaps::default()).unwrap();
        // t=1, h~ = z0. Prescriptions are constants (singleton private
        // histories); enumerate and compare against the dynamics: under
        // a1 = 0 the state persists w.p. 2/3.
        let ph = presc.ph_initial(0);
        let node = system.node(1, ph).unwrap();
        for gamma in 0..presc.joint_card(1) as u64 {
            let parts = presc.decode_joint_presc(1, gamma);
            let a1 = presc.apply_agent(1, 0, parts[0], 0);
            let row = kernel_row(&model, &index, &presc, node, 1, gamma);
            let p_persist = if a1 == 0 { rat(2, 3) } else { rat(1, 3) };
            // Next obs z0 <=> next state s0 (we are at s0).
            let p0 = row.iter().find(|(o, _)| *o == 0).map(|(_, p)| p.clone());
            assert_eq!(p0.unwrap(), p_persist);
        }
    }

    #[test]
    fn cost_tables_single_state_read_off_prescribed_actions() {
        let model = fixtures::m_unit();
        let (index, presc) = setup(&model, 1, DomainMode::Full);
        let system =
            CoordinatedSystem::build(&model, &index, &presc, 1, &SizeCaps::default()).unwrap();
        let tables =
            coordination_cost_tables(&model, &presc, &system, &SizeCaps::default()).unwrap();
        for ((t, _, gamma), (c, _)) in &tables {
            let parts = presc.decode_joint_presc(*t, *gamma);
            let a1 = presc.apply_agent(*t, 0, parts[0], 0);
            let a2 = presc.apply_agent(*t, 1, parts[1], 0);
            let a = model.joint_action_id(&[a1, a2]);
            assert_eq!(c, model.cost_c(0, a));
        }
    }

    #[test]
    fn match_cost_table_t1_by_direct_sum() {
        // Oracle: c~(1, h~, G) = sum over initial entries of
        // p * c(s, G(privs)) since P(h~_1) = 1 here.
        let model = fixtures::m_match();
        let (index, presc) = setup(&model, 1, DomainMode::Full);
        let system =
            CoordinatedSystem::build(&model, &index, &presc, 1, &SizeCaps::default()).unwrap();
        let tables =
            coordination_cost_tables(&model, &presc, &system, &SizeCaps::default()).unwrap();
        for gamma in 0..presc.joint_card(1) as u64 {
            let mut expected = Rat::zero();
            for e in model.initial_entries() {
                let (_, private) = model.decode_joint_obs(e.obs);
                let privs: Vec<u64> = private.iter().map(|&o| o as u64).collect();
                let actions = presc.apply_joint(1, gamma, &privs);
                expected += &e.prob * model.cost_c(e.state, model.joint_action_id(&actions));
            }
            let (c, _) = &tables[&(1, presc.ph_initial(0), gamma)];
            assert_eq!(c, &expected);
        }
    }

    #[test]
    fn projection_preserves_mass() {
        let model = fixtures::m_match();
        let (index, presc) = setup(&model, 2, DomainMode::Reachable);
        let cfg = RunConfig::new(2, rat(1, 2)).unwrap();
        let policy = pure_policy_on_path(&model, &index, &presc, 2, |t, ph| {
            (ph ^ t as u64) % presc.joint_card(t) as u64
        });
        let measure = coordinated_forward(
            &model,
            &index,
            &presc,
            &PolicyObject::Coord(policy),
            &cfg,
            &SizeCaps::default(),
        )
        .unwrap();
        let joint = project_to_joint(&model, &index, &presc, &measure).unwrap();
        assert_eq!(joint.total_mass(), measure.total_mass());
        assert_eq!(joint.space, MeasureSpace::JointHistory);
    }

    #[test]
    fn measure_to_policy_round_trips() {
        let model = fixtures::m_match();
        let (index, presc) = setup(&model, 2, DomainMode::Reachable);
        let cfg = RunConfig::new(2, Rat::one()).unwrap();
        let caps = SizeCaps::default();
        let v1 = pure_policy_on_path(&model, &index, &presc, 2, |_, _| 3);
        let v2 = pure_policy_on_path(&model, &index, &presc, 2, |t, _| {
            presc.joint_card(t) as u64 - 1
        });
        let m1 = coordinated_forward(&model, &index, &presc, &PolicyObject::Coord(v1), &cfg, &caps)
            .unwrap();
        let m2 = coordinated_forward(&model, &index, &presc, &PolicyObject::Coord(v2), &cfg, &caps)
            .unwrap();
        let mut combo = OccupationMeasure::empty(&cfg, MeasureSpace::Coordination);
        combo.add_scaled(&m1, &rat(1, 3));
        combo.add_scaled(&m2, &rat(2, 3));
        let extracted = measure_to_policy(&model, &index, &presc, &combo).unwrap();
        let regenerated = coordinated_forward(
            &model,
            &index,
            &presc,
            &PolicyObject::Coord(extracted),
            &cfg,
            &caps,
        )
        .unwrap();
        assert_eq!(regenerated, combo);
    }

    #[test]
    fn corrupted_measure_reports_flow_violation() {
        let model = fixtures::m_match();
        let (index, presc) = setup(&model, 2, DomainMode::Reachable);
        let cfg = RunConfig::new(2, Rat::one()).unwrap();
        let caps = SizeCaps::default();
        let v = pure_policy_on_path(&model, &index, &presc, 2, |_, _| 5);
        let mut measure =
            coordinated_forward(&model, &index, &presc, &PolicyObject::Coord(v), &cfg, &caps)
                .unwrap();
        // Scale one t=2 cell: breaks the flow equation at its parent.
        let key = *measure
            .weights
            .keys()
            .find(|(t, _, _)| *t == 2)
            .expect("has a t=2 cell");
        let w = measure.weights.get_mut(&key).unwrap();
        *w = w.clone() * rat(1, 2);
        match measure_to_policy(&model, &index, &presc, &measure) {
            Err(CoordError::FlowViolation { .. }) => {}
            other => panic!("expected FlowViolation, got {other:?}"),
        }
    }
}
