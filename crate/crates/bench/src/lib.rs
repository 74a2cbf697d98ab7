//! Benchmark sweeps over scenes × seeds × agent counts × controller modes:
//! running episodes, persisting traces and rendering metric reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sar_core::backend::LanguageModel;
use sar_core::metrics::{aggregate, AggregateReport, EpisodeResult};
use sar_core::orchestrator::{run_episode, ControllerMode, EpisodeConfig, EpisodeTrace, TraceError};
use sar_core::world::SceneConfig;

pub const PLAN_FILE: &str = "plan.json";
pub const STORE_FILE: &str = "replay.jsonl";
pub const TRACE_DIR: &str = "traces";
pub const REPORT_TSV: &str = "report.tsv";
pub const REPORT_TXT: &str = "report.txt";
pub const TIMELINE_FILE: &str = "timelines.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    /// Built-in scene ids or scene config paths.
    pub scenes: Vec<String>,
    pub seeds: Vec<u64>,
    pub agents: Vec<usize>,
    pub modes: Vec<ControllerMode>,
    pub horizon: u32,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scene: String,
    pub mode: ControllerMode,
    pub n_agents: usize,
    pub seed: u64,
}

impl std::fmt::Display for EpisodeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "scene {} {} n={} seed {}", self.scene, self.mode, self.n_agents, self.seed)
    }
}

impl BenchmarkPlan {
    /// The cartesian product, sorted and without duplicates.
    pub fn episodes(&self) -> Vec<EpisodeSpec> {
        let mut set = BTreeSet::new();
        for scene in &self.scenes {
            for &mode in &self.modes {
                for &n_agents in &self.agents {
                    for &seed in &self.seeds {
                        set.insert(EpisodeSpec { scene: scene.clone(), mode, n_agents, seed });
                    }
                }
            }
        }
        set.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() || self.seeds.is_empty() || self.agents.is_empty() || self.modes.is_empty() {
            bail!("plan needs at least one scene, seed, agent count and mode");
        }
        if self.agents.contains(&0) {
            bail!("agent counts must be positive");
        }
        for spec in self.episodes() {
            SceneConfig::resolve(&spec.scene, spec.n_agents, spec.seed).with_context(|| format!("{spec}"))?;
        }
        Ok(())
    }

    fn config(&self, spec: &EpisodeSpec) -> Result<EpisodeConfig> {
        let scene = SceneConfig::resolve(&spec.scene, spec.n_agents, spec.seed)?;
        let mut config = EpisodeConfig::new(scene, spec.mode);
        config.horizon = self.horizon;
        config.model = self.model.clone();
        Ok(config)
    }
}

/// Parses `a,b,c` lists where integer items may also be inclusive ranges
/// `lo-hi`.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr + TryFrom<u64>,
    <T as FromStr>::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = item.split_once('-') {
            let (lo, hi): (u64, u64) =
                (lo.trim().parse().context("range start")?, hi.trim().parse().context("range end")?);
            if lo > hi {
                bail!("empty range `{item}`");
            }
            for v in lo..=hi {
                out.push(T::try_from(v).map_err(|_| anyhow::anyhow!("`{v}` out of range"))?);
            }
        } else {
            out.push(item.parse::<T>().map_err(|e| anyhow::anyhow!("`{item}`: {e}"))?);
        }
    }
    if out.is_empty() {
        bail!("empty list");
    }
    Ok(out)
}

/// Scene arguments: numeric ids and ranges, or config paths.
pub fn parse_scenes(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-').map(|(a, b)| (a.parse::<u32>(), b.parse::<u32>())) {
            Some((Ok(lo), Ok(hi))) => out.extend((lo..=hi).map(|i| i.to_string())),
            _ => out.push(item.to_string()),
        }
    }
    if out.is_empty() {
        bail!("empty scene list");
    }
    Ok(out)
}

pub fn parse_modes(text: &str) -> Result<Vec<ControllerMode>> {
    if text.trim() == "all" {
        return Ok(ControllerMode::ALL.to_vec());
    }
    text.split(',').map(|m| m.trim().parse::<ControllerMode>().map_err(anyhow::Error::msg)).collect()
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' }).collect()
}

/// `{scene}_{mode}_{n}_{seed}.jsonl`
pub fn trace_file_name(trace: &EpisodeTrace) -> String {
    let h = &trace.header;
    format!("{}_{}_{}_{}.jsonl", sanitize(&h.scene_id), h.mode, h.agents.len(), h.seed)
}

#[derive(Debug)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub aborted: Vec<(EpisodeSpec, String)>,
    pub report: Option<AggregateReport>,
}

impl RunSummary {
    pub fn complete(&self) -> bool {
        self.aborted.is_empty()
    }
}

/// Runs every episode of `plan` on a pool of `jobs` workers, writes one
/// trace per completed episode under `out/traces`, and renders the report.
/// Aborted episodes leave no trace and are listed as missing.
pub fn execute(plan: &BenchmarkPlan, backend: &dyn LanguageModel, out: &Path, jobs: usize) -> Result<RunSummary> {
    plan.validate()?;
    let trace_dir = out.join(TRACE_DIR);
    fs::create_dir_all(&trace_dir).with_context(|| format!("creating {}", trace_dir.display()))?;
    fs::write(out.join(PLAN_FILE), serde_json::to_string_pretty(plan)?)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let specs = plan.episodes();
    let results: Vec<Result<std::result::Result<PathBuf, String>>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let config = plan.config(spec)?;
                let trace = run_episode(&config, backend)?;
                if let Some(reason) = &trace.footer.aborted {
                    log::error!("{spec}: aborted: {reason}");
                    return Ok(Err(reason.clone()));
                }
                let path = trace_dir.join(trace_file_name(&trace));
                fs::write(&path, trace.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
                log::info!("{spec}: {} steps, {:?}", trace.footer.steps, trace.footer.termination);
                Ok(Ok(path))
            })
            .collect()
    });
    let mut written = Vec::new();
    let mut aborted = Vec::new();
    for (spec, r) in specs.into_iter().zip(results) {
        match r? {
            Ok(path) => written.push(path),
            Err(reason) => aborted.push((spec, reason)),
        }
    }
    let report = if written.is_empty() {
        None
    } else {
        let mut rendered = render_report(out)?;
        rendered.report.skipped.extend(aborted.iter().map(|(s, why)| format!("missing {s}: {why}")));
        write_report(out, &rendered)?;
        Some(rendered.report)
    };
    Ok(RunSummary { written, aborted, report })
}

/// Directory holding trace files: `dir/traces` when present, else `dir`.
pub fn trace_dir(dir: &Path) -> PathBuf {
    let nested = dir.join(TRACE_DIR);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub struct LoadedTraces {
    pub traces: Vec<(PathBuf, EpisodeTrace)>,
    /// Files that could not be used, with the reason.
    pub skipped: Vec<String>,
}

/// Reads every `*.jsonl` trace in sorted order. Corrupt or aborted traces
/// are skipped; a schema version mismatch is an error.
pub fn load_traces(dir: &Path) -> Result<LoadedTraces> {
    let dir = trace_dir(dir);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && p.file_name().is_some_and(|n| n != STORE_FILE))
        .collect();
    paths.sort();
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path)?;
        match EpisodeTrace::from_jsonl(&text) {
            Ok(t) if t.is_aborted() => skipped.push(format!("{}: aborted episode", path.display())),
            Ok(t) => traces.push((path, t)),
            Err(e @ TraceError::Version { .. }) => {
                return Err(anyhow::Error::new(e).context(format!("{}", path.display())));
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(format!("{}: {e}", path.display()));
            }
        }
    }
    Ok(LoadedTraces { traces, skipped })
}

pub struct RenderedReport {
    pub report: AggregateReport,
    pub timelines: String,
}

/// Recomputes every episode result from the traces in `dir`.
pub fn render_report(dir: &Path) -> Result<RenderedReport> {
    let loaded = load_traces(dir)?;
    if loaded.traces.is_empty() {
        bail!("no usable traces in {}", trace_dir(dir).display());
    }
    let results: Vec<EpisodeResult> = loaded.traces.iter().map(|(_, t)| EpisodeResult::from_trace(t)).collect();
    let mut report = aggregate(&results)?;
    report.skipped = loaded.skipped;
    let mut timelines = String::new();
    for (path, trace) in &loaded.traces {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        timelines.push_str(&timeline(&name, trace));
        timelines.push('\n');
    }
    Ok(RenderedReport { report, timelines })
}

pub fn write_report(out: &Path, rendered: &RenderedReport) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORT_TSV), rendered.report.to_tsv())?;
    fs::write(out.join(REPORT_TXT), rendered.report.to_text())?;
    fs::write(out.join(TIMELINE_FILE), &rendered.timelines)?;
    Ok(())
}

/// Per-step summary: actions, success flags and ledger sizes.
pub fn timeline(name: &str, trace: &EpisodeTrace) -> String {
    let mut out = format!(
        "== {name} ({} steps, {:?})\n",
        trace.footer.steps, trace.footer.termination
    );
    for step in &trace.steps {
        let actions: Vec<String> = step.actions.iter().map(|a| a.action.to_string()).collect();
        let flags: String = step.flags().iter().map(|&f| if f { '1' } else { '0' }).collect();
        let _ = writeln!(
            out,
            "t={:<3} d={flags} open={} done={} | {}",
            step.t,
            step.ledger.open.len(),
            step.ledger.completed.len(),
            actions.join(", ")
        );
    }
    for (subtask, done) in &trace.footer.ground_truth {
        let _ = writeln!(out, "   {} {subtask}", if *done { "[x]" } else { "[ ]" });
    }
    out
}

/// Compares the traces of two run directories file by file.
pub fn compare_traces(recorded: &Path, replayed: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut mismatched = Vec::new();
    let mut missing = Vec::new();
    let mut names: Vec<_> = fs::read_dir(trace_dir(recorded))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    names.sort();
    for path in names {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        match fs::read(trace_dir(replayed).join(&name)) {
            Ok(bytes) if bytes == fs::read(&path)? => {}
            Ok(_) => mismatched.push(name),
            Err(_) => missing.push(name),
        }
    }
    Ok((mismatched, missing))
}

pub fn read_plan(dir: &Path) -> Result<BenchmarkPlan> {
    let path = dir.join(PLAN_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list::<u64>("0-4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_list::<usize>("2, 3,5").unwrap(), vec![2, 3, 5]);
        assert!(parse_list::<u64>("4-1").is_err());
        assert!(parse_list::<u64>("").is_err());
        assert_eq!(parse_scenes("1-3,scenes/x.toml").unwrap(), vec!["1", "2", "3", "scenes/x.toml"]);
        assert_eq!(parse_modes("all").unwrap().len(), 4);
        assert_eq!(parse_modes("llamar,react").unwrap(), vec![ControllerMode::Llamar, ControllerMode::React]);
        assert!(parse_modes("plan").is_err());
    }

    #[test]
    fn episodes_are_sorted_and_unique() {
        let plan = BenchmarkPlan {
            scenes: vec!["2".into(), "1".into(), "2".into()],
            seeds: vec![1, 0],
            agents: vec![2],
            modes: vec![ControllerMode::React, ControllerMode::Llamar],
            horizon: 30,
            model: "m".into(),
        };
        let eps = plan.episodes();
        assert_eq!(eps.len(), 8);
        assert!(eps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(eps[0], EpisodeSpec { scene: "1".into(), mode: ControllerMode::Llamar, n_agents: 2, seed: 0 });
    }

    #[test]
    fn file_names_are_safe() {
        assert_eq!(sanitize("my scene/1"), "my-scene-1");
    }
}
