//! Output files of a run: `rounds.csv`, `summary.txt`, `chain.dump`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::engine::{RoundReport, SimulationResult};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CHAIN_FILE: &str = "chain.dump";

/// Column names of `rounds.csv`, in order.
pub const ROUNDS_COLUMNS: [&str; 17] = [
    "round",
    "agent",
    "kind",
    "delta",
    "cumulative",
    "accuracy",
    "hold_score",
    "delay_score",
    "power_score",
    "illegit_score",
    "w_a",
    "w_b",
    "w_c",
    "w_d",
    "w_e",
    "was_leader",
    "eliminated",
];

/// One row per agent per round. `delta` is empty for agents that were not
/// graded that round (the leader, eliminated agents).
pub fn write_rounds_csv<W: Write>(reports: &[RoundReport], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROUNDS_COLUMNS)?;
    for rep in reports {
        for rec in &rep.agents {
            let f = &rec.factors;
            let mut row = vec![
                rep.round.to_string(),
                rec.agent.to_string(),
                rec.kind.to_string(),
                rec.delta.map(|d| d.to_string()).unwrap_or_default(),
                rec.cumulative.to_string(),
            ];
            row.extend(f.scores().iter().map(f64::to_string));
            row.extend(rec.weights.iter().map(f64::to_string));
            row.push(rec.was_leader().to_string());
            row.push(rec.eliminated.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()
}

pub fn rounds_csv_string(reports: &[RoundReport]) -> String {
    let mut buf = Vec::new();
    write_rounds_csv(reports, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn chain_dump_string(result: &SimulationResult) -> String {
    let mut buf = Vec::new();
    result
        .chain
        .write_dump(&mut buf)
        .expect("writing to memory");
    String::from_utf8(buf).expect("dump is utf-8")
}

/// Writes all three files into `dir`, creating it if needed.
pub fn write_outputs(result: &SimulationResult, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let rounds = fs::File::create(dir.join(ROUNDS_FILE))?;
    write_rounds_csv(&result.reports, io::BufWriter::new(rounds))?;
    fs::write(dir.join(SUMMARY_FILE), result.summary.render())?;
    let dump = fs::File::create(dir.join(CHAIN_FILE))?;
    let mut dump = io::BufWriter::new(dump);
    result.chain.write_dump(&mut dump)?;
    dump.flush()
}
