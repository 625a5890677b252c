//! Plan datasets and run artifacts on disk.
//!
//! A dataset is a directory of `agent_<id>.plans` files. Each non-empty line
//! reads `<score>:<v_1>,<v_2>,...,<v_d>`; the line with the lowest score is
//! the agent's preferred plan (first one on ties).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coordination::IterationTrace;
use crate::error::{DsmError, Result};
use crate::exchange::{write_exchange_csv, ExchangeRecord};
use crate::metrics::MetricsReport;
use crate::plan::{rmse, AgentState, Plan, PlanSet, Population};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub files: Vec<PathBuf>,
}

fn agent_id(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("agent_")?.strip_suffix(".plans")?.parse().ok()
}

/// Parses one plan file into its plans and the preferred index.
pub fn parse_plan_file(path: &Path, text: &str) -> Result<PlanSet> {
    let err = |line: usize, msg: String| DsmError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut plans = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut d = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (score, values) = line
            .split_once(':')
            .ok_or_else(|| err(line_no, "expected `<score>:<values>`".into()))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|e| err(line_no, format!("bad score {score:?}: {e}")))?;
        if score.is_nan() {
            return Err(err(line_no, "score is NaN".into()));
        }
        let slots = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| err(line_no, format!("bad value {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match d {
            None => d = Some(slots.len()),
            Some(d) if d != slots.len() => {
                return Err(err(line_no, format!("expected {d} values, found {}", slots.len())))
            }
            _ => {}
        }
        let plan = Plan::new(slots).map_err(|e| err(line_no, e.to_string()))?;
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, plans.len()));
        }
        plans.push(plan);
    }
    let (_, preferred) = best.ok_or_else(|| err(0, "file contains no plans".into()))?;
    PlanSet::new(plans, preferred).map_err(|e| err(0, e.to_string()))
}

/// Loads up to `limit` agents, lowest file ids first. Every agent starts on
/// its preferred plan with `beta = 0`.
pub fn load_dataset(path: &Path, limit: Option<usize>) -> Result<(Population, DatasetManifest)> {
    let entries = fs::read_dir(path).map_err(|e| DsmError::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| DsmError::io(path, e))?;
        let p = entry.path();
        if let Some(id) = agent_id(&p) {
            files.push((id, p));
        }
    }
    files.sort();
    if let Some(limit) = limit {
        files.truncate(limit);
    }
    if files.is_empty() {
        return Err(DsmError::Dataset(format!(
            "no agent_<id>.plans files in {}",
            path.display()
        )));
    }

    let mut agents = Vec::with_capacity(files.len());
    let mut shape: Option<(usize, usize)> = None;
    for (idx, (_, file)) in files.iter().enumerate() {
        let text = fs::read_to_string(file).map_err(|e| DsmError::io(file, e))?;
        let set = parse_plan_file(file, &text)?;
        let this = (set.d(), set.len());
        match shape {
            None => shape = Some(this),
            Some(s) if s != this => {
                return Err(DsmError::Dataset(format!(
                    "{} has d={} k={}, expected d={} k={}",
                    file.display(),
                    this.0,
                    this.1,
                    s.0,
                    s.1
                )))
            }
            _ => {}
        }
        agents.push(AgentState::new(idx, set, 0.0)?);
    }
    let (d, k) = shape.unwrap_or_default();
    let manifest = DatasetManifest {
        root: path.to_path_buf(),
        n: agents.len(),
        d,
        k,
        files: files.into_iter().map(|(_, p)| p).collect(),
    };
    Ok((Population::new(agents)?, manifest))
}

/// Serialises one agent's plans; the score is the plan's RMSE against the
/// preferred plan.
pub fn format_plan_file(set: &PlanSet) -> String {
    let preferred = set.preferred().slots();
    let mut out = String::new();
    for plan in set.plans() {
        let score = rmse(plan.slots(), preferred);
        out.push_str(&score.to_string());
        out.push(':');
        let values: Vec<String> = plan.slots().iter().map(f64::to_string).collect();
        out.push_str(&values.join(","));
        out.push('\n');
    }
    out
}

/// Writes `agent_<id>.plans` for every agent into `dir`.
pub fn write_dataset(population: &Population, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| DsmError::io(dir, e))?;
    population
        .agents()
        .iter()
        .map(|agent| {
            let path = dir.join(format!("agent_{}.plans", agent.id));
            write_atomic(&path, format_plan_file(agent.plan_set()).as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| DsmError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DsmError::io(path, e))
}

/// Writes `metrics.json`, `trace.csv`, `exchanges.csv` and `config.json`
/// into `out` and returns their paths.
pub fn save_run<C: Serialize>(
    report: &MetricsReport,
    trace: &IterationTrace,
    exchanges: &[ExchangeRecord],
    config: &C,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| DsmError::io(out, e))?;
    let mut written = Vec::with_capacity(4);

    let path = out.join("metrics.json");
    write_atomic(&path, &serde_json::to_vec_pretty(report)?)?;
    written.push(path);

    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let path = out.join("trace.csv");
    write_atomic(&path, &buf)?;
    written.push(path);

    let mut buf = Vec::new();
    write_exchange_csv(exchanges, &mut buf)?;
    let path = out.join("exchanges.csv");
    write_atomic(&path, &buf)?;
    written.push(path);

    let path = out.join("config.json");
    write_atomic(&path, &serde_json::to_vec_pretty(config)?)?;
    written.push(path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_minimum_score_first_on_ties() {
        let text = "3.5:1,2,3\n0.5:2,2,2\n0.5:3,2,1\n";
        let set = parse_plan_file(Path::new("agent_0.plans"), text).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.preferred_index(), 1);
    }

    #[test]
    fn wrong_arity_cites_line() {
        let text = "0:1,2,3\n\n1:1,2\n";
        match parse_plan_file(Path::new("agent_7.plans"), text) {
            Err(DsmError::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, PathBuf::from("agent_7.plans"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_is_rejected() {
        let p = Path::new("agent_1.plans");
        assert!(matches!(parse_plan_file(p, "1,2,3\n"), Err(DsmError::Parse { line: 1, .. })));
        assert!(matches!(parse_plan_file(p, "0:1,x\n"), Err(DsmError::Parse { line: 1, .. })));
        assert!(matches!(parse_plan_file(p, "0:1,-2\n"), Err(DsmError::Parse { line: 1, .. })));
        assert!(matches!(parse_plan_file(p, ""), Err(DsmError::Parse { .. })));
        // unequal totals are a hard error
        assert!(parse_plan_file(p, "0:1,1\n1:1,2\n").is_err());
    }

    #[test]
    fn agent_file_names() {
        assert_eq!(agent_id(Path::new("/x/agent_12.plans")), Some(12));
        assert_eq!(agent_id(Path::new("/x/agent_a.plans")), None);
        assert_eq!(agent_id(Path::new("/x/agent_1.txt")), None);
    }
}
