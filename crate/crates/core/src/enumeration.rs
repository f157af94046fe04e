//! Dense integer indexing of history and prescription spaces.
//!
//! Histories are encoded arithmetically so that ids follow the
//! lexicographic order of component sequences and never need to be
//! materialized:
//!
//! - common history at t:  fold of common observations, base |O0|;
//! - private history of agent n at t: fold of (o_1, a_1, o_2, ..., o_t)
//!   in time order, alternating bases |On| and |An|;
//! - joint history at t: fold of (common, private_1, .., private_N) with
//!   per-space radices;
//! - prescription of agent n at t: one action digit per domain history,
//!   base |An|, first domain history most significant;
//! - prescription-observation history at t: fold of
//!   (o0_1, G_1, o0_2, ..., o0_t).
//!
//! Cardinalities are computed exactly and checked against configurable
//! caps before any id arithmetic is trusted.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use thiserror::Error;

use crate::model::TeamModel;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("{space} at t={t} has cardinality {cardinality}, exceeding the cap {cap}")]
    SizeLimitExceeded {
        space: String,
        t: usize,
        cardinality: BigUint,
        cap: u128,
    },
}

/// Size guards. `max_ids` bounds every id space that must stay addressable;
/// `max_enumerable` bounds spaces that get iterated exhaustively (LP columns,
/// prescription enumeration, mixture supports).
#[derive(Debug, Clone, Copy)]
pub struct SizeCaps {
    pub max_ids: u128,
    pub max_enumerable: u64,
}

impl Default for SizeCaps {
    fn default() -> Self {
        SizeCaps {
            max_ids: 1 << 48,
            max_enumerable: 1 << 20,
        }
    }
}

/// Index over joint, common, and private history spaces for t = 1..=T.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    horizon: usize,
    n_common_obs: usize,
    n_private_obs: Vec<usize>,
    n_actions: Vec<usize>,
    /// [t-1] -> |H0_t|
    common_card: Vec<u64>,
    /// [agent][t-1] -> |Hn_t|
    private_card: Vec<Vec<u64>>,
    /// [t-1] -> |H_t|
    joint_card: Vec<u128>,
    /// [agent][t-1] -> sorted reachable (common id, private id) cells
    reachable_cells: Vec<Vec<Vec<(u64, u64)>>>,
    /// [agent][t-1] -> sorted reachable private ids
    reachable_private: Vec<Vec<Vec<u64>>>,
}

impl HistoryIndex {
    /// Builds the index, including a positive-probability reachability
    /// sweep used for `reachable` prescription domains and policy
    /// sampling. Deterministic: all orderings are by id.
    pub fn build(model: &TeamModel, horizon: usize, caps: &SizeCaps) -> Result<Self, IndexError> {
        assert!(horizon >= 1);
        let n = model.n_agents();
        let n_common_obs = model.n_common_obs();
        let n_private_obs: Vec<usize> = (0..n).map(|a| model.n_private_obs(a)).collect();
        let n_actions: Vec<usize> = (0..n).map(|a| model.n_actions(a)).collect();

        let mut common_card = Vec::with_capacity(horizon);
        let mut private_card = vec![Vec::with_capacity(horizon); n];
        let mut joint_card = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let c = checked_card(
                BigUint::from(n_common_obs).pow(t as u32),
                "common histories",
                t,
                caps,
            )?;
            common_card.push(c as u64);
            let mut joint = BigUint::from(n_common_obs).pow(t as u32);
            for agent in 0..n {
                let card = BigUint::from(n_private_obs[agent]).pow(t as u32)
                    * BigUint::from(n_actions[agent]).pow((t - 1) as u32);
                joint *= &card;
                let card = checked_card(card, &format!("agent {agent} private histories"), t, caps)?;
                private_card[agent].push(card as u64);
            }
            joint_card.push(checked_card(joint, "joint histories", t, caps)?);
        }

        let mut index = HistoryIndex {
            horizon,
            n_common_obs,
            n_private_obs,
            n_actions,
            common_card,
            private_card,
            joint_card,
            reachable_cells: vec![vec![Vec::new(); horizon]; n],
            reachable_private: vec![vec![Vec::new(); horizon]; n],
        };
        index.sweep_reachability(model);
        Ok(index)
    }

    /// Support-only forward sweep: a history is reachable iff it has
    /// positive probability under some policy, equivalently under the
    /// all-uniform one.
    fn sweep_reachability(&mut self, model: &TeamModel) {
        let n = model.n_agents();
        let mut frontier: BTreeSet<(u64, Vec<u64>, usize)> = BTreeSet::new();
        for e in model.initial_entries() {
            let (common, private) = model.decode_joint_obs(e.obs);
            let privs: Vec<u64> = private.iter().map(|&o| o as u64).collect();
            frontier.insert((common as u64, privs, e.state));
        }
        for t in 1..=self.horizon {
            let mut cells: Vec<BTreeSet<(u64, u64)>> = vec![BTreeSet::new(); n];
            for (common, privs, _) in &frontier {
                for agent in 0..n {
                    cells[agent].insert((*common, privs[agent]));
                }
            }
            for agent in 0..n {
                self.reachable_private[agent][t - 1] =
                    cells[agent].iter().map(|&(_, p)| p).collect::<BTreeSet<_>>().into_iter().collect();
                self.reachable_cells[agent][t - 1] = cells[agent].iter().copied().collect();
            }
            if t == self.horizon {
                break;
            }
            let mut next = BTreeSet::new();
            for (common, privs, state) in &frontier {
                for a in 0..model.n_joint_actions() {
                    let parts = model.decode_joint_action(a);
                    for e in model.transition_row(*state, a) {
                        let (o_common, o_private) = model.decode_joint_obs(e.obs);
                        let common2 = self.extend_common(*common, o_common);
                        let privs2: Vec<u64> = (0..n)
                            .map(|ag| self.extend_private(ag, privs[ag], parts[ag], o_private[ag]))
                            .collect();
                        next.insert((common2, privs2, e.next_state));
                    }
                }
            }
            frontier = next;
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn common_card(&self, t: usize) -> u64 {
        self.common_card[t - 1]
    }

    pub fn private_card(&self, agent: usize, t: usize) -> u64 {
        self.private_card[agent][t - 1]
    }

    pub fn joint_card(&self, t: usize) -> u128 {
        self.joint_card[t - 1]
    }

    pub fn extend_common(&self, common: u64, obs: usize) -> u64 {
        common * self.n_common_obs as u64 + obs as u64
    }

    pub fn extend_private(&self, agent: usize, private: u64, action: usize, obs: usize) -> u64 {
        (private * self.n_actions[agent] as u64 + action as u64) * self.n_private_obs[agent] as u64
            + obs as u64
    }

    /// Joint history id from components, common outermost.
    pub fn encode_joint(&self, t: usize, common: u64, privs: &[u64]) -> u64 {
        let mut id = common as u128;
        for (agent, &p) in privs.iter().enumerate() {
            id = id * self.private_card[agent][t - 1] as u128 + p as u128;
        }
        id as u64
    }

    pub fn decode_joint(&self, t: usize, id: u64) -> (u64, Vec<u64>) {
        let n = self.n_private_obs.len();
        let mut id = id as u128;
        let mut privs = vec![0u64; n];
        for agent in (0..n).rev() {
            let base = self.private_card[agent][t - 1] as u128;
            privs[agent] = (id % base) as u64;
            id /= base;
        }
        (id as u64, privs)
    }

    /// Observation sequence of a common history id, oldest first.
    pub fn common_components(&self, t: usize, mut id: u64) -> Vec<usize> {
        let mut obs = vec![0usize; t];
        for k in (0..t).rev() {
            obs[k] = (id % self.n_common_obs as u64) as usize;
            id /= self.n_common_obs as u64;
        }
        obs
    }

    /// Observation and action sequences of a private history id.
    pub fn private_components(&self, agent: usize, t: usize, mut id: u64) -> (Vec<usize>, Vec<usize>) {
        let n_obs = self.n_private_obs[agent] as u64;
        let n_act = self.n_actions[agent] as u64;
        let mut obs = vec![0usize; t];
        let mut acts = vec![0usize; t - 1];
        for k in (1..t).rev() {
            obs[k] = (id % n_obs) as usize;
            id /= n_obs;
            acts[k - 1] = (id % n_act) as usize;
            id /= n_act;
        }
        obs[0] = id as usize;
        (obs, acts)
    }

    /// Reachable (common, private) information cells of an agent at t.
    pub fn reachable_cells(&self, agent: usize, t: usize) -> &[(u64, u64)] {
        &self.reachable_cells[agent][t - 1]
    }

    /// Reachable private histories of an agent at t.
    pub fn reachable_private(&self, agent: usize, t: usize) -> &[u64] {
        &self.reachable_private[agent][t - 1]
    }

    pub fn render_joint(&self, model: &TeamModel, t: usize, id: u64) -> String {
        let (common, privs) = self.decode_joint(t, id);
        let common_obs = self.common_components(t, common);
        let mut steps = Vec::with_capacity(t);
        let mut acts_per_agent: Vec<Vec<usize>> = Vec::new();
        let mut obs_per_agent: Vec<Vec<usize>> = Vec::new();
        for (agent, &p) in privs.iter().enumerate() {
            let (obs, acts) = self.private_components(agent, t, p);
            obs_per_agent.push(obs);
            acts_per_agent.push(acts);
        }
        for k in 0..t {
            let mut labels = vec![model.common_obs_labels()[common_obs[k]].clone()];
            for (agent, obs) in obs_per_agent.iter().enumerate() {
                labels.push(model.private_obs_labels(agent)[obs[k]].to_string());
            }
            steps.push(format!("o({})", labels.join(",")));
            if k + 1 < t {
                let labels: Vec<String> = acts_per_agent
                    .iter()
                    .enumerate()
                    .map(|(agent, acts)| model.action_labels(agent)[acts[k]].to_string())
                    .collect();
                steps.push(format!("a({})", labels.join(",")));
            }
        }
        steps.join("|")
    }
}

fn checked_card(card: BigUint, space: &str, t: usize, caps: &SizeCaps) -> Result<u128, IndexError> {
    let as_u128: Option<u128> = u128::try_from(&card).ok();
    match as_u128 {
        Some(v) if v <= caps.max_ids => Ok(v),
        _ => Err(IndexError::SizeLimitExceeded {
            space: space.to_string(),
            t,
            cardinality: card,
            cap: caps.max_ids,
        }),
    }
}

/// Which private histories a prescription is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainMode {
    /// All of Hn_t. Doubly exponential; only for the smallest fixtures.
    Full,
    /// Reachable private histories only; unreachable inputs map to action 0.
    Reachable,
}

/// Index over prescriptions and prescription-observation histories.
#[derive(Debug, Clone)]
pub struct PrescriptionIndex {
    mode: DomainMode,
    horizon: usize,
    n_common_obs: usize,
    n_actions: Vec<usize>,
    /// [t-1][agent] -> sorted domain private-history ids
    domains: Vec<Vec<Vec<u64>>>,
    /// [t-1][agent] -> |An| ^ |domain|
    agent_card: Vec<Vec<u128>>,
    /// [t-1] -> product over agents
    joint_card: Vec<u128>,
    /// [t-1] -> |H~_t|
    ph_card: Vec<u128>,
}

impl PrescriptionIndex {
    pub fn build(
        model: &TeamModel,
        index: &HistoryIndex,
        horizon: usize,
        mode: DomainMode,
        caps: &SizeCaps,
    ) -> Result<Self, IndexError> {
        assert!(horizon <= index.horizon());
        let n = model.n_agents();
        let mut domains = Vec::with_capacity(horizon);
        let mut agent_card = Vec::with_capacity(horizon);
        let mut joint_card = Vec::with_capacity(horizon);
        let mut ph_card = Vec::with_capacity(horizon);
        let mut ph: BigUint = BigUint::from(1u32);
        for t in 1..=horizon {
            let mut doms = Vec::with_capacity(n);
            let mut cards = Vec::with_capacity(n);
            let mut joint = BigUint::from(1u32);
            for agent in 0..n {
                let dom: Vec<u64> = match mode {
                    DomainMode::Full => (0..index.private_card(agent, t)).collect(),
                    DomainMode::Reachable => index.reachable_private(agent, t).to_vec(),
                };
                let card = BigUint::from(model.n_actions(agent)).pow(dom.len() as u32);
                joint *= &card;
                let card =
                    checked_card(card, &format!("agent {agent} prescriptions"), t, caps)?;
                doms.push(dom);
                cards.push(card);
            }
            let joint = checked_card(joint, "joint prescriptions", t, caps)?;
            ph = ph * BigUint::from(model.n_common_obs());
            let ph_t = checked_card(ph.clone(), "prescription-observation histories", t, caps)?;
            ph = ph * BigUint::from(joint);
            domains.push(doms);
            agent_card.push(cards);
            joint_card.push(joint);
            ph_card.push(ph_t);
        }
        Ok(PrescriptionIndex {
            mode,
            horizon,
            n_common_obs: model.n_common_obs(),
            n_actions: (0..n).map(|a| model.n_actions(a)).collect(),
            domains,
            agent_card,
            joint_card,
            ph_card,
        })
    }

    pub fn mode(&self) -> DomainMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn domain(&self, t: usize, agent: usize) -> &[u64] {
        &self.domains[t - 1][agent]
    }

    pub fn agent_card(&self, t: usize, agent: usize) -> u128 {
        self.agent_card[t - 1][agent]
    }

    pub fn joint_card(&self, t: usize) -> u128 {
        self.joint_card[t - 1]
    }

    pub fn ph_card(&self, t: usize) -> u128 {
        self.ph_card[t - 1]
    }

    /// Action chosen by an agent prescription at a private history.
    /// Histories outside the domain take action 0 by convention.
    pub fn apply_agent(&self, t: usize, agent: usize, presc: u64, private: u64) -> usize {
        let dom = &self.domains[t - 1][agent];
        match dom.binary_search(&private) {
            Ok(pos) => {
                let base = self.n_actions[agent] as u128;
                let exp = (dom.len() - 1 - pos) as u32;
                ((presc as u128 / base.pow(exp)) % base) as usize
            }
            Err(_) => 0,
        }
    }

    /// Per-agent actions induced by a joint prescription on a tuple of
    /// private histories.
    pub fn apply_joint(&self, t: usize, joint_presc: u64, privs: &[u64]) -> Vec<usize> {
        let parts = self.decode_joint_presc(t, joint_presc);
        parts
            .iter()
            .zip(privs)
            .enumerate()
            .map(|(agent, (&p, &h))| self.apply_agent(t, agent, p, h))
            .collect()
    }

    /// Joint prescription id from per-agent prescription ids.
    pub fn encode_joint_presc(&self, t: usize, parts: &[u64]) -> u64 {
        let mut id: u128 = 0;
        for (agent, &p) in parts.iter().enumerate() {
            id = id * self.agent_card[t - 1][agent] + p as u128;
        }
        id as u64
    }

    pub fn decode_joint_presc(&self, t: usize, id: u64) -> Vec<u64> {
        let n = self.n_actions.len();
        let mut id = id as u128;
        let mut parts = vec![0u64; n];
        for agent in (0..n).rev() {
            let base = self.agent_card[t - 1][agent];
            parts[agent] = (id % base) as u64;
            id /= base;
        }
        parts
    }

    /// Builds an agent prescription id from an action choice per domain
    /// history (same order as `domain`).
    pub fn encode_agent_presc(&self, t: usize, agent: usize, choices: &[usize]) -> u64 {
        debug_assert_eq!(choices.len(), self.domains[t - 1][agent].len());
        let base = self.n_actions[agent] as u128;
        let mut id: u128 = 0;
        for &c in choices {
            id = id * base + c as u128;
        }
        id as u64
    }

    /// Prescription-observation history at t = 1 is the first common
    /// observation.
    pub fn ph_initial(&self, common_obs: usize) -> u64 {
        common_obs as u64
    }

    /// h~_{t+1} = (h~_t, G_t, o0_{t+1}).
    pub fn extend_ph(&self, t: usize, ph: u64, joint_presc: u64, common_obs: usize) -> u64 {
        ((ph as u128 * self.joint_card[t - 1] + joint_presc as u128)
            * self.n_common_obs as u128
            + common_obs as u128) as u64
    }

    /// Decomposes h~_t into its common-observation sequence and the
    /// prescriptions taken at steps 1..t-1.
    pub fn decode_ph(&self, t: usize, mut id: u64) -> (Vec<usize>, Vec<u64>) {
        let mut obs = vec![0usize; t];
        let mut prescs = vec![0u64; t - 1];
        let mut wide = id as u128;
        for k in (1..t).rev() {
            obs[k] = (wide % self.n_common_obs as u128) as usize;
            wide /= self.n_common_obs as u128;
            prescs[k - 1] = (wide % self.joint_card[k - 1]) as u64;
            wide /= self.joint_card[k - 1];
        }
        id = wide as u64;
        obs[0] = (id % self.n_common_obs as u64) as usize;
        (obs, prescs)
    }

    /// Common-history id embedded in h~_t.
    pub fn ph_common(&self, t: usize, id: u64) -> u64 {
        let (obs, _) = self.decode_ph(t, id);
        let mut common = 0u64;
        for o in obs {
            common = common * self.n_common_obs as u64 + o as u64;
        }
        common
    }

    /// All joint prescriptions at t, guarded by the enumeration cap.
    pub fn enumerate_joint(&self, t: usize, caps: &SizeCaps) -> Result<Vec<u64>, IndexError> {
        let card = self.joint_card[t - 1];
        if card > caps.max_enumerable as u128 {
            return Err(IndexError::SizeLimitExceeded {
                space: "joint prescription enumeration".to_string(),
                t,
                cardinality: BigUint::from(card),
                cap: caps.max_enumerable as u128,
            });
        }
        Ok((0..card as u64).collect())
    }

    pub fn render_ph(&self, model: &TeamModel, t: usize, id: u64) -> String {
        let (obs, prescs) = self.decode_ph(t, id);
        let mut steps = Vec::new();
        for k in 0..t {
            steps.push(format!("o0({})", model.common_obs_labels()[obs[k]]));
            if k + 1 < t {
                steps.push(format!("G#{}", prescs[k]));
            }
        }
        steps.join("|")
    }
}
