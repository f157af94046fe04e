//! Built-in desk-scale instances used by the test suites and shipped as
//! JSON files under `fixtures/`.
//!
//! - `m_unit`: one state, singleton observations, two agents with binary
//!   actions. Costs c = a1 + a2, d = [a1].
//! - `m_match`: two states with uniform initial law; agent 1 privately
//!   observes the state correctly with probability 3/4; agent 2 is blind.
//!   The team pays 1 unless both actions match the state index. The
//!   constraint charges a1 + a2.
//! - `m_gap`: one state; the objective rewards the joint action (0,0)
//!   while the constraint charges everything except (1,1), so meeting the
//!   constraint requires correlated randomization. Exhibits a strictly
//!   positive duality gap for independently randomizing agents.
//! - `m_signal`: two states whose identity is broadcast through the
//!   common observation, for hand-checkable coordinator kernels.

use crate::model::{validate_model, RawInitial, RawModel, RawTransition, TeamModel};
use crate::rational::{rat, Rat};

fn binary_actions() -> Vec<Vec<String>> {
    vec![
        vec!["0".into(), "1".into()],
        vec!["0".into(), "1".into()],
    ]
}

pub fn m_unit_raw() -> RawModel {
    let mut transition = Vec::new();
    for a1 in ["0", "1"] {
        for a2 in ["0", "1"] {
            transition.push(RawTransition {
                s: "s0".into(),
                a: vec![a1.into(), a2.into()],
                s_next: "s0".into(),
                o: vec!["*".into(), "*".into(), "*".into()],
                p: Rat::one(),
            });
        }
    }
    RawModel {
        n_agents: 2,
        states: vec!["s0".into()],
        common_obs: vec!["*".into()],
        private_obs: vec![vec!["*".into()], vec!["*".into()]],
        actions: binary_actions(),
        transition,
        initial: vec![RawInitial {
            s: "s0".into(),
            o: vec!["*".into(), "*".into(), "*".into()],
            p: Rat::one(),
        }],
        // Joint actions in order (0,0), (0,1), (1,0), (1,1).
        cost_c: vec![Rat::zero(), Rat::one(), Rat::one(), Rat::from_int(2)],
        cost_d: vec![
            vec![Rat::zero()],
            vec![Rat::zero()],
            vec![Rat::one()],
            vec![Rat::one()],
        ],
        kappa: vec![rat(1, 2)],
    }
}

pub fn m_unit() -> TeamModel {
    validate_model(&m_unit_raw()).expect("m_unit fixture is valid")
}

/// Observation channel: agent 1 sees the current state correctly w.p. 3/4.
fn match_obs_prob(obs: usize, state: usize) -> Rat {
    if obs == state {
        rat(3, 4)
    } else {
        rat(1, 4)
    }
}

/// State dynamics: under a1 = 0 the state persists w.p. 2/3, under a1 = 1
/// it flips w.p. 2/3.
fn match_state_prob(next: usize, cur: usize, a1: usize) -> Rat {
    let persist = next == cur;
    match (a1, persist) {
        (0, true) | (1, false) => rat(2, 3),
        _ => rat(1, 3),
    }
}

pub fn m_match_raw() -> RawModel {
    let states = ["s0", "s1"];
    let obs1 = ["o0", "o1"];
    let mut transition = Vec::new();
    for (s, s_label) in states.iter().enumerate() {
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                for (s_next, sn_label) in states.iter().enumerate() {
                    for (o, o_label) in obs1.iter().enumerate() {
                        transition.push(RawTransition {
                            s: (*s_label).into(),
                            a: vec![a1.to_string(), a2.to_string()],
                            s_next: (*sn_label).into(),
                            o: vec!["*".into(), (*o_label).into(), "*".into()],
                            p: match_state_prob(s_next, s, a1) * match_obs_prob(o, s_next),
                        });
                    }
                }
            }
        }
    }
    let mut initial = Vec::new();
    for (s, s_label) in states.iter().enumerate() {
        for (o, o_label) in obs1.iter().enumerate() {
            initial.push(RawInitial {
                s: (*s_label).into(),
                o: vec!["*".into(), (*o_label).into(), "*".into()],
                p: rat(1, 2) * match_obs_prob(o, s),
            });
        }
    }
    let mut cost_c = Vec::new();
    let mut cost_d = Vec::new();
    for s in 0..2usize {
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                let matched = a1 == s && a2 == s;
                cost_c.push(if matched { Rat::zero() } else { Rat::one() });
                cost_d.push(vec![Rat::from_int((a1 + a2) as i64)]);
            }
        }
    }
    RawModel {
        n_agents: 2,
        states: states.iter().map(|s| s.to_string()).collect(),
        common_obs: vec!["*".into()],
        private_obs: vec![obs1.iter().map(|o| o.to_string()).collect(), vec!["*".into()]],
        actions: binary_actions(),
        transition,
        initial,
        cost_c,
        cost_d,
        kappa: vec![Rat::one()],
    }
}

pub fn m_match() -> TeamModel {
    validate_model(&m_match_raw()).expect("m_match fixture is valid")
}

pub fn m_gap_raw() -> RawModel {
    let mut raw = m_unit_raw();
    // (0,0), (0,1), (1,0), (1,1)
    raw.cost_c = vec![Rat::zero(), Rat::one(), Rat::one(), Rat::one()];
    raw.cost_d = vec![
        vec![Rat::one()],
        vec![Rat::one()],
        vec![Rat::one()],
        vec![Rat::zero()],
    ];
    raw.kappa = vec![rat(1, 2)];
    raw
}

pub fn m_gap() -> TeamModel {
    validate_model(&m_gap_raw()).expect("m_gap fixture is valid")
}

pub fn m_signal_raw() -> RawModel {
    let states = ["s0", "s1"];
    let common = ["z0", "z1"];
    let mut transition = Vec::new();
    for (s, s_label) in states.iter().enumerate() {
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                for (s_next, sn_label) in states.iter().enumerate() {
                    // The common observation announces the next state.
                    transition.push(RawTransition {
                        s: (*s_label).into(),
                        a: vec![a1.to_string(), a2.to_string()],
                        s_next: (*sn_label).into(),
                        o: vec![common[s_next].into(), "*".into(), "*".into()],
                        p: match_state_prob(s_next, s, a1),
                    });
                }
            }
        }
    }
    let initial = states
        .iter()
        .enumerate()
        .map(|(s, s_label)| RawInitial {
            s: (*s_label).into(),
            o: vec![common[s].into(), "*".into(), "*".into()],
            p: rat(1, 2),
        })
        .collect();
    let mut cost_c = Vec::new();
    let mut cost_d = Vec::new();
    for _s in 0..2usize {
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                cost_c.push(Rat::from_int((a1 + a2) as i64));
                cost_d.push(vec![Rat::from_int(a2 as i64)]);
            }
        }
    }
    RawModel {
        n_agents: 2,
        states: states.iter().map(|s| s.to_string()).collect(),
        common_obs: common.iter().map(|c| c.to_string()).collect(),
        private_obs: vec![vec!["*".into()], vec!["*".into()]],
        actions: binary_actions(),
        transition,
        initial,
        cost_c,
        cost_d,
        kappa: vec![Rat::one()],
    }
}

pub fn m_signal() -> TeamModel {
    validate_model(&m_signal_raw()).expect("m_signal fixture is valid")
}
