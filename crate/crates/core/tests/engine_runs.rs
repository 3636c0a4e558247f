use std::collections::BTreeSet;

use mrlpos_core::config::AgentGroup;
use mrlpos_core::engine::AgentRole;
use mrlpos_core::export::{chain_dump_string, rounds_csv_string, write_outputs, ROUNDS_COLUMNS};
use mrlpos_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_SUMMARY: &str = "tests/fixtures/canonical_seed42.summary";

fn small_mixed(seed: u64, rounds: u64) -> SimulationConfig {
    SimulationConfig::new(
        rounds,
        seed,
        vec![
            AgentGroup::new(AgentKind::Honest, 5),
            AgentGroup::new(AgentKind::Holder, 1),
            AgentGroup::new(AgentKind::Delayer, 1),
            AgentGroup::new(AgentKind::SuperPower, 1),
            AgentGroup::new(AgentKind::Sloppy, 1),
        ],
    )
}

#[test]
fn canonical_summary_matches_golden() {
    let result = run_simulation(SimulationConfig::canonical(42)).unwrap();
    let rendered = result.summary.render();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN_SUMMARY);
    if std::env::var_os("MRLPOS_BLESS").is_some() {
        std::fs::write(&path, &rendered).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden summary present");
    assert_eq!(rendered, golden);
}

#[test]
fn csv_header_and_row_count() {
    let result = run_simulation(small_mixed(3, 20)).unwrap();
    let csv = rounds_csv_string(&result.reports);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), ROUNDS_COLUMNS.join(","));
    assert_eq!(
        lines.next().unwrap().split(',').count(),
        ROUNDS_COLUMNS.len()
    );
    assert_eq!(csv.lines().count(), 1 + 20 * 9);
}

#[test]
fn outputs_land_in_directory() {
    let dir = std::env::temp_dir().join(format!("mrlpos-core-out-{}", std::process::id()));
    let result = run_simulation(small_mixed(5, 10)).unwrap();
    write_outputs(&result, &dir).unwrap();
    let dump = std::fs::read_to_string(dir.join("chain.dump")).unwrap();
    assert_eq!(dump, chain_dump_string(&result));
    assert!(std::fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .starts_with("# mrlpos summary v1"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn honest_conduct_never_crosses_a_threshold() {
    let thresholds = DetectionThresholds::default();
    let view: Vec<Transaction> = (1..=16)
        .map(|i| Transaction {
            tx_id: i,
            created_round: 1,
            is_legitimate: i % 3 != 0,
            fee: 1,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100_000u32 {
        let role = if i % 2 == 0 {
            Role::Leader
        } else {
            Role::Validator
        };
        let a = act(&AgentProfile::honest(), role, &view, &mut rng);
        assert!(!ground_truth_bad(&a, &thresholds), "round {i}");
    }
}

#[test]
fn adversaries_cross_their_threshold() {
    let thresholds = DetectionThresholds::default();
    let view: Vec<Transaction> = (1..=16)
        .map(|i| Transaction {
            tx_id: i,
            created_round: 1,
            is_legitimate: true,
            fee: 1,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in [AgentKind::Delayer, AgentKind::SuperPower] {
        let a = act(&AgentProfile::defaults(kind), Role::Leader, &view, &mut rng);
        assert!(ground_truth_bad(&a, &thresholds), "{kind}");
    }
    let bad = (0..1000)
        .filter(|_| {
            let a = act(
                &AgentProfile::defaults(AgentKind::Holder),
                Role::Leader,
                &view,
                &mut rng,
            );
            ground_truth_bad(&a, &thresholds)
        })
        .count();
    // 1 - 0.7^16 of rounds hold at least one transaction
    assert!(bad > 980, "{bad}");
}

#[test]
fn joiner_runs_alongside_and_is_recorded() {
    let mut config = small_mixed(8, 30);
    config.join.push(JoinEvent {
        round: 10,
        group: AgentGroup::new(AgentKind::Honest, 2),
    });
    let result = run_simulation(config).unwrap();
    assert_eq!(
        result.reports[9].joined_this_round,
        vec![AgentId(9), AgentId(10)]
    );
    assert_eq!(result.reports[9].agents.len(), 9);
    assert_eq!(result.reports[10].agents.len(), 11);
    assert_eq!(result.summary.agents[9].joined_round, 10);
    result.engine.audit().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_are_reproducible(seed in any::<u64>()) {
        let a = run_simulation(small_mixed(seed, 40)).unwrap();
        let b = run_simulation(small_mixed(seed, 40)).unwrap();
        prop_assert_eq!(rounds_csv_string(&a.reports), rounds_csv_string(&b.reports));
        prop_assert_eq!(chain_dump_string(&a), chain_dump_string(&b));
    }

    #[test]
    fn ledger_conserves_transactions(seed in any::<u64>(), ttl in 0u64..20, p in 0.0..0.5f64) {
        let mut config = small_mixed(seed, 60);
        config.network.tx_ttl = ttl;
        config.network.p_illegit = p;
        let result = run_simulation(config).unwrap();
        let counts = result.engine.audit().unwrap();
        prop_assert_eq!(counts.total(), result.engine.ledger().len());
        prop_assert_eq!(counts.pending, result.engine.mempool().len());
        let in_blocks: usize = result.chain.blocks().iter().map(|b| b.tx_ids.len()).sum();
        prop_assert_eq!(counts.committed, in_blocks);
        prop_assert_eq!(result.chain.committed_len() as u64, result.summary.committed_blocks);
    }

    #[test]
    fn eliminated_agents_stay_out(seed in any::<u64>()) {
        let result = run_simulation(small_mixed(seed, 80)).unwrap();
        let mut gone: BTreeSet<AgentId> = BTreeSet::new();
        for rep in &result.reports {
            prop_assert!(!gone.contains(&rep.leader));
            prop_assert!(rep.tally.iter().all(|(id, _)| !gone.contains(&id)));
            for rec in &rep.agents {
                if gone.contains(&rec.agent) {
                    prop_assert_eq!(rec.role, AgentRole::Inactive);
                    prop_assert!(rec.delta.is_none());
                    prop_assert!(rec.eliminated);
                }
            }
            for id in &rep.eliminated_this_round {
                let rec = &rep.agents[id.index()];
                prop_assert!(rec.cumulative < -20);
            }
            gone.extend(rep.eliminated_this_round.iter().copied());
        }
    }

    #[test]
    fn cumulative_is_the_sum_of_deltas(seed in any::<u64>()) {
        let result = run_simulation(small_mixed(seed, 50)).unwrap();
        for a in &result.summary.agents {
            let sum: i64 = result
                .reports
                .iter()
                .filter_map(|r| r.agents.get(a.agent.index()))
                .filter_map(|rec| rec.delta)
                .sum();
            prop_assert_eq!(sum, a.final_cumulative);
        }
    }

    #[test]
    fn deltas_come_from_the_table(seed in any::<u64>()) {
        let result = run_simulation(small_mixed(seed, 30)).unwrap();
        for rec in result.reports.iter().flat_map(|r| &r.agents) {
            if let (Some(d), Some(o)) = (rec.delta, rec.outcome) {
                prop_assert_eq!(d, penalty_reward(o));
            }
        }
    }
}
