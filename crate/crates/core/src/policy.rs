//! Policy classes and the constructive conversions between them.
//!
//! Decentralized decision rules map an agent's information cell, the pair
//! (common history id, private history id), to a distribution over own
//! actions. Coordination decision rules map a prescription-observation
//! history id to a distribution over joint prescriptions. Rules store
//! explicit entries for the cells they were built on; cells without an
//! entry behave as the uniform distribution (pure accessors fall back to
//! action 0). Such cells carry no occupation mass, so the convention is
//! observationally irrelevant and only pins a canonical object.

use std::borrow::Cow;
use std::collections::BTreeMap;

use num_bigint::BigUint;
use thiserror::Error;

use crate::enumeration::{HistoryIndex, PrescriptionIndex, SizeCaps};
use crate::model::TeamModel;
use crate::rational::Rat;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("support of size {count} exceeds the cap {cap}")]
    SupportExplosion { count: BigUint, cap: u64 },
    #[error("policy does not match the index: {0}")]
    PolicyHistoryMismatch(String),
    #[error("mixture weights sum to {total}, expected 1")]
    WeightSum { total: Rat },
    #[error("distribution at {context} sums to {total}, expected 1")]
    DistributionSum { context: String, total: Rat },
    #[error("negative weight at {0}")]
    NegativeWeight(String),
    #[error("expected a pure policy: {0}")]
    NotPure(String),
    #[error("mixture has no atoms")]
    EmptyMixture,
    #[error(transparent)]
    Index(#[from] crate::enumeration::IndexError),
}

/// Distribution over one agent's actions: sorted by action id, strictly
/// positive weights summing to one.
pub type ActionDistr = Vec<(usize, Rat)>;

/// Distribution over joint prescription ids, same conventions.
pub type PrescDistr = Vec<(u64, Rat)>;

/// One agent's decision rule for one time step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct DecisionRule {
    pub entries: BTreeMap<(u64, u64), ActionDistr>,
}

impl DecisionRule {
    pub fn pure(entries: impl IntoIterator<Item = ((u64, u64), usize)>) -> Self {
        DecisionRule {
            entries: entries
                .into_iter()
                .map(|(k, a)| (k, vec![(a, Rat::one())]))
                .collect(),
        }
    }

    pub fn distr(&self, cell: (u64, u64), n_actions: usize) -> Cow<'_, [(usize, Rat)]> {
        match self.entries.get(&cell) {
            Some(d) => Cow::Borrowed(d.as_slice()),
            None => crate::rational::uniform_cow(n_actions),
        }
    }

    pub fn is_pure(&self) -> bool {
        self.entries.values().all(|d| d.len() == 1)
    }

    /// Action of a pure rule at a cell; unlisted cells take action 0.
    pub fn pure_action(&self, cell: (u64, u64)) -> usize {
        self.entries.get(&cell).map_or(0, |d| d[0].0)
    }
}

/// One agent's behavioral policy for t = 1..=T.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AgentPolicy {
    pub rules: Vec<DecisionRule>,
}

impl AgentPolicy {
    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    pub fn rule(&self, t: usize) -> &DecisionRule {
        &self.rules[t - 1]
    }

    pub fn is_pure(&self) -> bool {
        self.rules.iter().all(|r| r.is_pure())
    }
}

/// A decentralized behavioral policy-profile: one policy per agent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DecentralizedProfile {
    pub agents: Vec<AgentPolicy>,
}

impl DecentralizedProfile {
    pub fn horizon(&self) -> usize {
        self.agents.first().map_or(0, |a| a.horizon())
    }

    pub fn is_pure(&self) -> bool {
        self.agents.iter().all(|a| a.is_pure())
    }

    pub fn action_distr(
        &self,
        model: &TeamModel,
        agent: usize,
        t: usize,
        cell: (u64, u64),
    ) -> Cow<'_, [(usize, Rat)]> {
        self.agents[agent].rule(t).distr(cell, model.n_actions(agent))
    }

    pub fn validate(&self, model: &TeamModel, horizon: usize) -> Result<(), PolicyError> {
        if self.agents.len() != model.n_agents() {
            return Err(PolicyError::PolicyHistoryMismatch(format!(
                "profile has {} agents, model has {}",
                self.agents.len(),
                model.n_agents()
            )));
        }
        for (n, agent) in self.agents.iter().enumerate() {
            if agent.horizon() < horizon {
                return Err(PolicyError::PolicyHistoryMismatch(format!(
                    "agent {n} policy covers {} steps, need {horizon}",
                    agent.horizon()
                )));
            }
            for (t, rule) in agent.rules.iter().enumerate() {
                for (cell, distr) in &rule.entries {
                    validate_distr(
                        distr,
                        model.n_actions(n),
                        &format!("agent {n}, t={}, cell {cell:?}", t + 1),
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn validate_distr(distr: &[(usize, Rat)], n_actions: usize, context: &str) -> Result<(), PolicyError> {
    let mut total = Rat::zero();
    let mut last: Option<usize> = None;
    for (a, w) in distr {
        if *a >= n_actions {
            return Err(PolicyError::PolicyHistoryMismatch(format!(
                "action {a} out of range at {context}"
            )));
        }
        if let Some(prev) = last {
            if *a <= prev {
                return Err(PolicyError::PolicyHistoryMismatch(format!(
                    "unsorted or duplicate action ids at {context}"
                )));
            }
        }
        last = Some(*a);
        if w.is_negative() || w.is_zero() {
            return Err(PolicyError::NegativeWeight(context.to_string()));
        }
        total += w;
    }
    if !total.is_one() {
        return Err(PolicyError::DistributionSum {
            context: context.to_string(),
            total,
        });
    }
    Ok(())
}

/// Finite-support mixture with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FiniteMixture<P> {
    pub atoms: Vec<(Rat, P)>,
}

impl<P> FiniteMixture<P> {
    pub fn unit(atom: P) -> Self {
        FiniteMixture {
            atoms: vec![(Rat::one(), atom)],
        }
    }

    pub fn validate_weights(&self) -> Result<(), PolicyError> {
        if self.atoms.is_empty() {
            return Err(PolicyError::EmptyMixture);
        }
        let mut total = Rat::zero();
        for (w, _) in &self.atoms {
            if w.is_negative() || w.is_zero() {
                return Err(PolicyError::NegativeWeight("mixture weight".to_string()));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(PolicyError::WeightSum { total });
        }
        Ok(())
    }
}

impl<P: Ord> FiniteMixture<P> {
    /// Sums weights of identical atoms and drops zero weights.
    pub fn merged(atoms: impl IntoIterator<Item = (Rat, P)>) -> Self {
        let mut map: BTreeMap<P, Rat> = BTreeMap::new();
        for (w, p) in atoms {
            if w.is_zero() {
                continue;
            }
            *map.entry(p).or_default() += w;
        }
        FiniteMixture {
            atoms: map.into_iter().map(|(p, w)| (w, p)).collect(),
        }
    }
}

/// Independent per-agent mixtures of agent policies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductMixture {
    pub factors: Vec<FiniteMixture<AgentPolicy>>,
}

impl ProductMixture {
    /// Expands the product of factors into the joint mixture it induces.
    pub fn to_joint_mixture(
        &self,
        caps: &SizeCaps,
    ) -> Result<FiniteMixture<DecentralizedProfile>, PolicyError> {
        let count = self
            .factors
            .iter()
            .fold(BigUint::from(1u32), |acc, f| acc * BigUint::from(f.atoms.len()));
        if count > BigUint::from(caps.max_enumerable) {
            return Err(PolicyError::SupportExplosion {
                count,
                cap: caps.max_enumerable,
            });
        }
        let mut atoms: Vec<(Rat, Vec<AgentPolicy>)> = vec![(Rat::one(), Vec::new())];
        for factor in &self.factors {
            let mut next = Vec::with_capacity(atoms.len() * factor.atoms.len());
            for (w, partial) in &atoms {
                for (fw, policy) in &factor.atoms {
                    let mut ext = partial.clone();
                    ext.push(policy.clone());
                    next.push((w * fw, ext));
                }
            }
            atoms = next;
        }
        Ok(FiniteMixture::merged(atoms.into_iter().map(|(w, agents)| {
            (w, DecentralizedProfile { agents })
        })))
    }
}

/// Coordinator decision rule for one time step: prescription-observation
/// history id to a distribution over joint prescriptions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct CoordRule {
    pub entries: BTreeMap<u64, PrescDistr>,
}

impl CoordRule {
    pub fn is_pure(&self) -> bool {
        self.entries.values().all(|d| d.len() == 1)
    }
}

/// A behavioral coordination policy for t = 1..=T. Histories without an
/// entry behave as uniform over all joint prescriptions at that step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoordinationPolicy {
    pub rules: Vec<CoordRule>,
}

impl CoordinationPolicy {
    pub fn horizon(&self) -> usize {
        self.rules.len()
    }

    pub fn rule(&self, t: usize) -> &CoordRule {
        &self.rules[t - 1]
    }

    pub fn is_pure(&self) -> bool {
        self.rules.iter().all(|r| r.is_pure())
    }

    /// Distribution at h~; expands the uniform fallback, which requires
    /// the prescription space at t to be enumerable.
    pub fn distr(
        &self,
        t: usize,
        ph: u64,
        presc: &PrescriptionIndex,
        caps: &SizeCaps,
    ) -> Result<Cow<'_, [(u64, Rat)]>, PolicyError> {
        match self.rules[t - 1].entries.get(&ph) {
            Some(d) => Ok(Cow::Borrowed(d.as_slice())),
            None => {
                let all = presc.enumerate_joint(t, caps)?;
                let w = Rat::one() / Rat::from(all.len());
                Ok(Cow::Owned(all.into_iter().map(|g| (g, w.clone())).collect()))
            }
        }
    }

    /// Prescription of a pure policy at h~.
    pub fn pure_presc(&self, t: usize, ph: u64) -> Result<u64, PolicyError> {
        match self.rules[t - 1].entries.get(&ph) {
            Some(d) if d.len() == 1 => Ok(d[0].0),
            Some(_) => Err(PolicyError::NotPure(format!("t={t}, history {ph}"))),
            None => Err(PolicyError::NotPure(format!(
                "t={t}, history {ph} has no entry"
            ))),
        }
    }

    pub fn validate(
        &self,
        presc: &PrescriptionIndex,
        horizon: usize,
    ) -> Result<(), PolicyError> {
        if self.horizon() < horizon {
            return Err(PolicyError::PolicyHistoryMismatch(format!(
                "coordination policy covers {} steps, need {horizon}",
                self.horizon()
            )));
        }
        for (t0, rule) in self.rules.iter().enumerate() {
            let t = t0 + 1;
            if t > horizon {
                break;
            }
            for (ph, distr) in &rule.entries {
                if *ph as u128 >= presc.ph_card(t) {
                    return Err(PolicyError::PolicyHistoryMismatch(format!(
                        "history {ph} out of range at t={t}"
                    )));
                }
                let mut total = Rat::zero();
                for (g, w) in distr {
                    if *g as u128 >= presc.joint_card(t) {
                        return Err(PolicyError::PolicyHistoryMismatch(format!(
                            "prescription {g} out of range at t={t}"
                        )));
                    }
                    if w.is_negative() || w.is_zero() {
                        return Err(PolicyError::NegativeWeight(format!("t={t}, history {ph}")));
                    }
                    total += w;
                }
                if !total.is_one() {
                    return Err(PolicyError::DistributionSum {
                        context: format!("t={t}, history {ph}"),
                        total,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Tagged union over every policy class the toolkit materializes.
#[derive(Debug, Clone)]
pub enum PolicyObject {
    Dec(DecentralizedProfile),
    MixtureDec(FiniteMixture<DecentralizedProfile>),
    Product(ProductMixture),
    Coord(CoordinationPolicy),
    MixtureCoord(FiniteMixture<CoordinationPolicy>),
}

impl PolicyObject {
    pub fn is_coordination(&self) -> bool {
        matches!(self, PolicyObject::Coord(_) | PolicyObject::MixtureCoord(_))
    }
}

/// The all-uniform behavioral profile: no explicit entries, every cell
/// falls back to the uniform rule.
pub fn uniform_profile(model: &TeamModel, horizon: usize) -> DecentralizedProfile {
    DecentralizedProfile {
        agents: (0..model.n_agents())
            .map(|_| AgentPolicy {
                rules: vec![DecisionRule::default(); horizon],
            })
            .collect(),
    }
}

/// Probability that the team forms each joint action at a joint history:
/// the product of per-agent decision rules evaluated at their information
/// cells.
pub fn joint_action_kernel(
    model: &TeamModel,
    profile: &DecentralizedProfile,
    t: usize,
    common: u64,
    privs: &[u64],
) -> Vec<(usize, Rat)> {
    let mut out: Vec<(usize, Rat)> = vec![(0, Rat::one())];
    for agent in 0..model.n_agents() {
        let distr = profile.action_distr(model, agent, t, (common, privs[agent]));
        let mut next = Vec::with_capacity(out.len() * distr.len());
        let base = model.n_actions(agent);
        for (prefix, w) in &out {
            for (a, aw) in distr.iter() {
                next.push((prefix * base + a, w * aw));
            }
        }
        out = next;
    }
    out
}

/// Same kernel keyed by joint-history id.
pub fn joint_action_kernel_by_id(
    model: &TeamModel,
    index: &HistoryIndex,
    profile: &DecentralizedProfile,
    t: usize,
    joint_history: u64,
) -> Vec<(usize, Rat)> {
    let (common, privs) = index.decode_joint(t, joint_history);
    joint_action_kernel(model, profile, t, common, &privs)
}

/// The reachable information cells of one agent, in deterministic order.
fn agent_cells(index: &HistoryIndex, agent: usize, horizon: usize) -> Vec<(usize, u64, u64)> {
    let mut cells = Vec::new();
    for t in 1..=horizon {
        for &(common, private) in index.reachable_cells(agent, t) {
            cells.push((t, common, private));
        }
    }
    cells
}

/// Realizes a behavioral policy of one agent as a mixture of pure agent
/// policies: one atom per choice of action at every reachable cell, with
/// weight the product of the behavioral probabilities of its choices.
fn expand_agent_policy(
    model: &TeamModel,
    index: &HistoryIndex,
    policy: &AgentPolicy,
    agent: usize,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<FiniteMixture<AgentPolicy>, PolicyError> {
    let cells = agent_cells(index, agent, horizon);
    let supports: Vec<Cow<'_, [(usize, Rat)]>> = cells
        .iter()
        .map(|&(t, common, private)| policy.rule(t).distr((common, private), model.n_actions(agent)))
        .collect();
    let count = supports
        .iter()
        .fold(BigUint::from(1u32), |acc, s| acc * BigUint::from(s.len()));
    if count > BigUint::from(caps.max_enumerable) {
        return Err(PolicyError::SupportExplosion {
            count,
            cap: caps.max_enumerable,
        });
    }

    let mut atoms: Vec<(Rat, Vec<usize>)> = vec![(Rat::one(), Vec::new())];
    for support in &supports {
        let mut next = Vec::with_capacity(atoms.len() * support.len());
        for (w, choices) in &atoms {
            for (idx, (_, aw)) in support.iter().enumerate() {
                let mut ext = choices.clone();
                ext.push(idx);
                next.push((w * aw, ext));
            }
        }
        atoms = next;
    }

    let built: Vec<(Rat, AgentPolicy)> = atoms
        .into_iter()
        .map(|(w, choices)| {
            let mut rules = vec![DecisionRule::default(); horizon];
            for (cell_idx, &(t, common, private)) in cells.iter().enumerate() {
                let action = supports[cell_idx][choices[cell_idx]].0;
                rules[t - 1]
                    .entries
                    .insert((common, private), vec![(action, Rat::one())]);
            }
            (w, AgentPolicy { rules })
        })
        .collect();
    Ok(FiniteMixture { atoms: built })
}

/// Realizes a behavioral profile as a product of per-agent mixtures of
/// pure policies with identical occupation measure up to the horizon.
pub fn behavioral_to_product_pure_mixture(
    model: &TeamModel,
    index: &HistoryIndex,
    profile: &DecentralizedProfile,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<ProductMixture, PolicyError> {
    let factors = profile
        .agents
        .iter()
        .enumerate()
        .map(|(agent, policy)| expand_agent_policy(model, index, policy, agent, horizon, caps))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProductMixture { factors })
}

/// Flattens a joint mixture of behavioral profiles into a mixture
/// supported on pure profiles, merging duplicate atoms.
pub fn flatten_joint_mixture(
    model: &TeamModel,
    index: &HistoryIndex,
    mixture: &FiniteMixture<DecentralizedProfile>,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<FiniteMixture<DecentralizedProfile>, PolicyError> {
    let mut out: Vec<(Rat, DecentralizedProfile)> = Vec::new();
    for (w, profile) in &mixture.atoms {
        let product = behavioral_to_product_pure_mixture(model, index, profile, horizon, caps)?;
        let joint = product.to_joint_mixture(caps)?;
        for (aw, atom) in joint.atoms {
            out.push((w * &aw, atom));
        }
    }
    Ok(FiniteMixture::merged(out))
}

/// Collapses independent per-agent mixtures to the behavioral profile
/// with the same occupation measure: at each reachable cell the rule is
/// the conditional next-action law given the agent's own realized actions,
/// computed under the factor mixture alone. Cells no atom can reach take
/// the uniform rule.
pub fn kuhn_collapse(
    model: &TeamModel,
    index: &HistoryIndex,
    product: &ProductMixture,
    horizon: usize,
) -> DecentralizedProfile {
    let mut agents = Vec::with_capacity(product.factors.len());
    for (agent, factor) in product.factors.iter().enumerate() {
        let n_actions = model.n_actions(agent);
        let mut rules = vec![DecisionRule::default(); horizon];
        for t in 1..=horizon {
            for &(common, private) in index.reachable_cells(agent, t) {
                // Probability each atom assigns to the own-action record
                // inside this private history.
                let cobs = index.common_components(t, common);
                let (obs, acts) = index.private_components(agent, t, private);
                let mut weights: Vec<Rat> = Vec::with_capacity(factor.atoms.len());
                for (w, policy) in &factor.atoms {
                    let mut like = w.clone();
                    let mut c_prefix = cobs[0] as u64;
                    let mut p_prefix = obs[0] as u64;
                    for step in 1..t {
                        let action = acts[step - 1];
                        let distr = policy.rule(step).distr((c_prefix, p_prefix), n_actions);
                        let aw = distr
                            .iter()
                            .find(|(a, _)| *a == action)
                            .map(|(_, w)| w.clone())
                            .unwrap_or_else(Rat::zero);
                        like *= aw;
                        c_prefix = index.extend_common(c_prefix, cobs[step]);
                        p_prefix = index.extend_private(agent, p_prefix, action, obs[step]);
                    }
                    weights.push(like);
                }
                let denom: Rat = weights.iter().sum();
                let distr: ActionDistr = if denom.is_zero() {
                    let w = Rat::one() / Rat::from(n_actions);
                    (0..n_actions).map(|a| (a, w.clone())).collect()
                } else {
                    let mut per_action = vec![Rat::zero(); n_actions];
                    for ((_, policy), like) in factor.atoms.iter().zip(&weights) {
                        if like.is_zero() {
                            continue;
                        }
                        for (a, aw) in policy.rule(t).distr((common, private), n_actions).iter() {
                            per_action[*a] += like * aw;
                        }
                    }
                    per_action
                        .into_iter()
                        .enumerate()
                        .filter(|(_, w)| !w.is_zero())
                        .map(|(a, w)| (a, w / &denom))
                        .collect()
                };
                rules[t - 1].entries.insert((common, private), distr);
            }
        }
        agents.push(AgentPolicy { rules });
    }
    DecentralizedProfile { agents }
}

/// Enumerates the common-observation sequences up to the horizon together
/// with their common-history ids, lexicographically.
fn common_sequences(index: &HistoryIndex, t: usize) -> impl Iterator<Item = u64> {
    0..index.common_card(t)
}

/// Canonical element of the correspondence from pure decentralized
/// profiles to pure coordination policies: at every prescription history
/// the coordinator prescribes exactly the profile's decision rules for
/// the embedded common history, ignoring past prescriptions. Entries are
/// generated along the common-observation tree, where every history the
/// lifted policy can reach lives.
pub fn psi_lift(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    profile: &DecentralizedProfile,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<CoordinationPolicy, PolicyError> {
    for agent in &profile.agents {
        if !agent.is_pure() {
            return Err(PolicyError::NotPure("psi_lift input".to_string()));
        }
    }
    let total: u128 = (1..=horizon).map(|t| index.common_card(t) as u128).sum();
    if total > caps.max_enumerable as u128 {
        return Err(PolicyError::SupportExplosion {
            count: BigUint::from(total),
            cap: caps.max_enumerable,
        });
    }

    let mut rules = vec![CoordRule::default(); horizon];
    // ph ids of the current layer, keyed by common-history id.
    let mut layer: BTreeMap<u64, u64> = common_sequences(index, 1)
        .map(|c| (c, presc.ph_initial(c as usize)))
        .collect();
    for t in 1..=horizon {
        let mut next: BTreeMap<u64, u64> = BTreeMap::new();
        for (&common, &ph) in &layer {
            let parts: Vec<u64> = (0..model.n_agents())
                .map(|agent| {
                    let choices: Vec<usize> = presc
                        .domain(t, agent)
                        .iter()
                        .map(|&h| profile.agents[agent].rule(t).pure_action((common, h)))
                        .collect();
                    presc.encode_agent_presc(t, agent, &choices)
                })
                .collect();
            let gamma = presc.encode_joint_presc(t, &parts);
            rules[t - 1].entries.insert(ph, vec![(gamma, Rat::one())]);
            if t < horizon {
                for o in 0..model.n_common_obs() {
                    next.insert(
                        index.extend_common(common, o),
                        presc.extend_ph(t, ph, gamma, o),
                    );
                }
            }
        }
        layer = next;
    }
    Ok(CoordinationPolicy { rules })
}

/// Reads the on-path behavior of a pure coordination policy back into the
/// pure decentralized profile that plays the same actions. Under a pure
/// policy the prescription sequence is a function of the common
/// observations, so a single profile always suffices.
pub fn coordination_to_pure_profile(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    policy: &CoordinationPolicy,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<DecentralizedProfile, PolicyError> {
    let total: u128 = (1..=horizon).map(|t| index.common_card(t) as u128).sum();
    if total > caps.max_enumerable as u128 {
        return Err(PolicyError::SupportExplosion {
            count: BigUint::from(total),
            cap: caps.max_enumerable,
        });
    }
    let mut agents: Vec<AgentPolicy> = (0..model.n_agents())
        .map(|_| AgentPolicy {
            rules: vec![DecisionRule::default(); horizon],
        })
        .collect();
    let mut layer: BTreeMap<u64, u64> = common_sequences(index, 1)
        .map(|c| (c, presc.ph_initial(c as usize)))
        .collect();
    for t in 1..=horizon {
        let mut next = BTreeMap::new();
        for (&common, &ph) in &layer {
            let gamma = policy.pure_presc(t, ph)?;
            let parts = presc.decode_joint_presc(t, gamma);
            for agent in 0..model.n_agents() {
                for &h in presc.domain(t, agent) {
                    let action = presc.apply_agent(t, agent, parts[agent], h);
                    agents[agent].rules[t - 1]
                        .entries
                        .insert((common, h), vec![(action, Rat::one())]);
                }
            }
            if t < horizon {
                for o in 0..model.n_common_obs() {
                    next.insert(
                        index.extend_common(common, o),
                        presc.extend_ph(t, ph, gamma, o),
                    );
                }
            }
        }
        layer = next;
    }
    Ok(DecentralizedProfile { agents })
}

/// Transports a mixture of pure decentralized profiles to the mixture of
/// their canonical coordination lifts, atom by atom.
pub fn mixture_transport(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    mixture: &FiniteMixture<DecentralizedProfile>,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<FiniteMixture<CoordinationPolicy>, PolicyError> {
    let lifted = mixture
        .atoms
        .iter()
        .map(|(w, u)| Ok((w.clone(), psi_lift(model, index, presc, u, horizon, caps)?)))
        .collect::<Result<Vec<_>, PolicyError>>()?;
    Ok(FiniteMixture::merged(lifted))
}

/// Reverse transport: maps each pure coordination atom to the pure
/// decentralized profile reading off its on-path prescriptions.
pub fn mixture_transport_reverse(
    model: &TeamModel,
    index: &HistoryIndex,
    presc: &PrescriptionIndex,
    mixture: &FiniteMixture<CoordinationPolicy>,
    horizon: usize,
    caps: &SizeCaps,
) -> Result<FiniteMixture<DecentralizedProfile>, PolicyError> {
    let atoms = mixture
        .atoms
        .iter()
        .map(|(w, v)| {
            Ok((
                w.clone(),
                coordination_to_pure_profile(model, index, presc, v, horizon, caps)?,
            ))
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    Ok(FiniteMixture::merged(atoms))
}
