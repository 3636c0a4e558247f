use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Row {
    round: u64,
    agent: u32,
    kind: String,
    delta: Option<i64>,
    cumulative: i64,
    accuracy: f64,
    hold_score: f64,
    delay_score: f64,
    power_score: f64,
    illegit_score: f64,
    w_a: f64,
    w_b: f64,
    w_c: f64,
    w_d: f64,
    w_e: f64,
    was_leader: bool,
    eliminated: bool,
}

fn join_rounds(rounds: &[u64]) -> String {
    rounds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn explain(report: &Path, agent: u32) -> Result<()> {
    let mut reader =
        csv::Reader::from_path(report).with_context(|| format!("opening {}", report.display()))?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.with_context(|| format!("reading {}", report.display()))?;
        if row.agent == agent {
            rows.push(row);
        }
    }
    let Some(first) = rows.first() else {
        bail!("agent {agent} does not appear in {}", report.display());
    };

    println!(
        "agent {agent} ({}), rounds {}..{}",
        first.kind,
        first.round,
        rows.last().unwrap().round
    );
    println!(
        "{:>6} {:>6} {:>6}  {:>5} {:>5} {:>5} {:>5} {:>5}  {:>5} {:>5} {:>5} {:>5} {:>5}  role",
        "round",
        "delta",
        "cum",
        "acc",
        "hold",
        "delay",
        "power",
        "illeg",
        "w_a",
        "w_b",
        "w_c",
        "w_d",
        "w_e"
    );
    for r in &rows {
        let delta = r
            .delta
            .map_or_else(|| "-".to_string(), |d| format!("{d:+}"));
        let role = if r.was_leader {
            "leader"
        } else if r.eliminated {
            "eliminated"
        } else {
            "validator"
        };
        println!(
            "{:>6} {:>6} {:>6}  {:.3} {:.3} {:.3} {:.3} {:.3}  {:.3} {:.3} {:.3} {:.3} {:.3}  {role}",
            r.round,
            delta,
            r.cumulative,
            r.accuracy,
            r.hold_score,
            r.delay_score,
            r.power_score,
            r.illegit_score,
            r.w_a,
            r.w_b,
            r.w_c,
            r.w_d,
            r.w_e,
        );
    }

    let led: Vec<u64> = rows
        .iter()
        .filter(|r| r.was_leader)
        .map(|r| r.round)
        .collect();
    if led.is_empty() {
        println!("led 0 rounds");
    } else {
        println!("led {} rounds: {}", led.len(), join_rounds(&led));
    }
    let penalized: Vec<u64> = rows
        .iter()
        .filter(|r| r.delta.is_some_and(|d| d < 0))
        .map(|r| r.round)
        .collect();
    if penalized.is_empty() {
        println!("penalized in 0 rounds");
    } else {
        println!(
            "penalized in {} rounds: {}",
            penalized.len(),
            join_rounds(&penalized)
        );
    }
    match rows.iter().find(|r| r.eliminated) {
        Some(r) => println!(
            "eliminated in round {} with cumulative {}",
            r.round, r.cumulative
        ),
        None => println!(
            "not eliminated; final cumulative {}",
            rows.last().unwrap().cumulative
        ),
    }
    Ok(())
}
