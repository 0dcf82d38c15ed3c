use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ahakit_collector::{CollectConfig, Collector, Family, ModelProfile};
use ahakit_core::collapse::{collapse_rates, collapse_table, CollapseReport};
use ahakit_core::latent::{layer_sweep, load_activations, projection_table, silhouette_table, SweepMode};
use ahakit_core::lingstats::{beginning_token_distribution, contrast_probability, top_k_contrast, Side};
use ahakit_core::puzzlegen::{gen_countdown, gen_kk, read_puzzles, write_puzzles, Puzzle, PuzzleError};
use ahakit_core::rasm::{density_table, rasm_summaries, stats_table, KdeGrid, TokenSets};
use ahakit_core::report::{emit_report, Cell, Format, Table};
use ahakit_core::transcript::{parse_transcripts, write_transcripts};
use ahakit_core::uncertainty::{
    aggregate_uncertainty, most_uncertain_sentences, top_uncertain_table, uncertainty_table, Mean, UncertaintyOptions,
    Unit,
};
use ahakit_core::{derive_seed, Role, Task, Transcript};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ToolConfig;
use crate::manifest::Run;
use crate::{CliError, Cli, Command, GenArgs};

const KK_DEFAULT_SWEEP: &str = "3..10";
// Count Down generation is bounded at 8 numbers.
const COUNTDOWN_DEFAULT_SWEEP: &str = "3..8";

/// `"5"`, `"3..10"` (inclusive), `"3..=10"` or `"3,5,7"`.
pub fn parse_difficulties(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Input(format!("invalid difficulty list {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if hi < lo {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    let mut seen = out.clone();
    seen.sort_unstable();
    seen.dedup();
    if out.is_empty() || seen.len() != out.len() {
        return Err(bad());
    }
    Ok(out)
}

fn puzzle_error(e: PuzzleError) -> CliError {
    match e {
        PuzzleError::DifficultyOutOfRange { .. } | PuzzleError::InvalidConfig(_) | PuzzleError::TooLarge { .. } => {
            CliError::Input(e.to_string())
        }
        _ => CliError::Internal(e.to_string()),
    }
}

/// `count` puzzles per difficulty; puzzle `i` at difficulty `n` uses seed
/// `derive_seed(seed, n, i)`. Output is ordered by difficulty, then index.
pub fn generate_puzzles(
    task: Task,
    difficulties: &[usize],
    count: usize,
    seed: u64,
    cfg: &ToolConfig,
) -> Result<Vec<Puzzle>, CliError> {
    let jobs: Vec<(usize, usize)> = difficulties.iter().flat_map(|&n| (0..count).map(move |i| (n, i))).collect();
    jobs.par_iter()
        .map(|&(n, i)| {
            let s = derive_seed(seed, n, i);
            match task {
                Task::Kk => gen_kk(n, s, &cfg.kk).map(Puzzle::Kk),
                Task::Countdown => gen_countdown(n, s, &cfg.countdown).map(Puzzle::Countdown),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(puzzle_error)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn finish_writer(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn write_table(table: &Table, path: &Path, format: Format, run: &mut Run) -> Result<(), CliError> {
    let mut w = create(path)?;
    emit_report(table, format, &mut w).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    finish_writer(w, path)?;
    run.output(path);
    Ok(())
}

fn write_json(value: &impl Serialize, path: &Path, run: Option<&mut Run>) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Internal(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| CliError::Internal(e.to_string()))?;
    finish_writer(w, path)?;
    if let Some(run) = run {
        run.output(path);
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn read_corpus(paths: &[PathBuf], run: &mut Run) -> Result<Vec<Transcript>, CliError> {
    let mut corpus = Vec::new();
    for p in paths {
        let f = File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        run.input(p);
        let outcome = parse_transcripts(BufReader::new(f));
        for e in outcome.errors {
            run.warn(format!("{}:{}: skipped line: {}", p.display(), e.line, e.error));
        }
        corpus.extend(outcome.transcripts);
    }
    Ok(corpus)
}

fn load_sets(path: Option<&Path>, run: &mut Run) -> Result<TokenSets, CliError> {
    let sets = match path {
        Some(p) => {
            run.input(p);
            TokenSets::load(p).map_err(|e| CliError::Input(e.to_string()))?
        }
        None => TokenSets::default(),
    };
    // Already logged by the token-set loader.
    for t in &sets.removed_overlap {
        run.warnings.push(format!("token {t:?} is in both sets and was dropped from both"));
    }
    Ok(sets)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    out.with_file_name(name)
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

pub(crate) fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = ToolConfig::load(cli.config.as_deref())?;
    let mut run = Run::default();
    if let Some(p) = &cli.config {
        run.input(p);
    }
    let (name, config, manifest_at) = match cli.command {
        Command::GenKk(args) => gen(Task::Kk, args, &cfg, &mut run)?,
        Command::GenCountdown(args) => gen(Task::Countdown, args, &cfg, &mut run)?,
        Command::Collect {
            task,
            n,
            count,
            seed,
            puzzles,
            family,
            endpoint,
            model,
            topk,
            parallelism,
            api_key_env,
            out,
        } => {
            let family: Family = family.parse().map_err(|e: ahakit_collector::CollectError| CliError::Input(e.to_string()))?;
            let mut cc = cfg.collect.clone();
            if let Some(e) = endpoint {
                cc.endpoint = e;
            }
            if let Some(m) = model {
                cc.model = m;
            }
            if let Some(k) = topk {
                cc.top_k = k;
            }
            if let Some(p) = parallelism {
                cc.parallelism = p;
            }
            if api_key_env.is_some() {
                cc.api_key_env = api_key_env;
            }
            let (set, source) = match puzzles {
                Some(p) => {
                    let f = File::open(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                    run.input(&p);
                    (read_puzzles(BufReader::new(f)).map_err(CliError::Input)?, json!("file"))
                }
                None => {
                    let task = task.unwrap_or(Task::Kk);
                    let default = if task == Task::Kk { KK_DEFAULT_SWEEP } else { COUNTDOWN_DEFAULT_SWEEP };
                    let ns = parse_difficulties(n.as_deref().unwrap_or(default))?;
                    let set = generate_puzzles(task, &ns, count, seed, &cfg)?;
                    (set, json!({"task": task, "n": ns, "count": count, "seed": seed, "grammar": grammar_json(task, &cfg)}))
                }
            };
            collect(set, family, cc.clone(), &out, &mut run)?;
            (
                "collect",
                json!({"family": family.as_str(), "collect": cc, "puzzles": source}),
                manifest_path(&out),
            )
        }
        Command::Tokens { inputs, output, top, dist_out, think_only } => {
            let corpus = read_corpus(&inputs, &mut run)?;
            let mut tc = cfg.tokens.clone();
            tc.think_only |= think_only;
            let table = tokens_table(&corpus, &tc.stoplist, tc.think_only, top)?;
            write_table(&table, &output.out, output.format, &mut run)?;
            if let Some(d) = dist_out {
                write_table(&distribution_table(&corpus, &tc.stoplist, tc.think_only), &d, output.format, &mut run)?;
            }
            ("tokens", json!({"tokens": tc, "top": top, "format": format_name(output.format)}), manifest_path(&output.out))
        }
        Command::Uncertainty { inputs, output, top_out, k, no_dedupe, token_level, think_only } => {
            let corpus = read_corpus(&inputs, &mut run)?;
            let mut uc = cfg.uncertainty.clone();
            uc.think_only |= think_only;
            uc.token_level |= token_level;
            uc.dedupe &= !no_dedupe;
            if let Some(k) = k {
                uc.top_k = k;
            }
            let opts = uncertainty_options(&uc);
            write_table(&uncertainty_table(&aggregate_uncertainty(&corpus, &opts)), &output.out, output.format, &mut run)?;
            if let Some(p) = top_out {
                let top = most_uncertain_sentences(&corpus, uc.top_k, uc.dedupe, &opts)
                    .map_err(|e| CliError::Input(e.to_string()))?;
                write_table(&top_uncertain_table(&top), &p, output.format, &mut run)?;
            }
            ("uncertainty", json!({"uncertainty": uc, "format": format_name(output.format)}), manifest_path(&output.out))
        }
        Command::Collapse { inputs, output, evidence } => {
            let corpus = read_corpus(&inputs, &mut run)?;
            let report = collapse_rates(&corpus, &cfg.collapse);
            write_table(&collapse_table(&report), &output.out, output.format, &mut run)?;
            if let Some(p) = evidence {
                write_evidence(&report, &p, &mut run)?;
            }
            ("collapse", json!({"collapse": cfg.collapse, "format": format_name(output.format)}), manifest_path(&output.out))
        }
        Command::Rasm { inputs, sets, output, stats_out, grid_points } => {
            let corpus = read_corpus(&inputs, &mut run)?;
            let sets = load_sets(sets.as_deref(), &mut run)?;
            let grid_points = grid_points.or(cfg.rasm.grid_points);
            let stats_out = stats_out.unwrap_or_else(|| sibling(&output.out, "_stats"));
            rasm(&corpus, &sets, grid_points, &output.out, &stats_out, output.format, &mut run)?;
            (
                "rasm",
                json!({"sets": sets.to_json(), "grid_points": grid_points, "format": format_name(output.format)}),
                manifest_path(&output.out),
            )
        }
        Command::Latent { dir, layers, labels, output, pc2_out, joint } => {
            let joint = joint || cfg.latent.joint;
            let (files, labels) = match dir {
                Some(d) => latent_dir(&d)?,
                None => (layers, labels.expect("clap enforces --labels")),
            };
            latent(&files, &labels, joint, &output.out, pc2_out.as_deref(), output.format, &mut run)?;
            (
                "latent",
                json!({"mode": if joint { "joint" } else { "per-task" }, "format": format_name(output.format)}),
                manifest_path(&output.out),
            )
        }
        Command::Report { inputs, sets, latent: latent_dirs, out_dir, format } => {
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
            let config = report(&inputs, sets.as_deref(), &latent_dirs, &out_dir, format, &cfg, &mut run)?;
            ("report", config, out_dir.join("manifest.json"))
        }
        Command::Fixtures { seed, out } => {
            let written = ahakit_core::fixtures::build_fixtures(seed, &out)
                .map_err(|e| CliError::Input(format!("cannot write fixtures to {}: {e}", out.display())))?;
            for p in &written {
                run.output(p);
            }
            ("fixtures", json!({"seed": seed}), out.join("manifest.json"))
        }
    };
    let manifest = run.finish(name, config)?;
    write_json(&manifest, &manifest_at, None)
}

fn grammar_json(task: Task, cfg: &ToolConfig) -> Value {
    match task {
        Task::Kk => json!(cfg.kk),
        Task::Countdown => json!(cfg.countdown),
    }
}

fn gen(task: Task, args: GenArgs, cfg: &ToolConfig, run: &mut Run) -> Result<(&'static str, Value, PathBuf), CliError> {
    let default = if task == Task::Kk { KK_DEFAULT_SWEEP } else { COUNTDOWN_DEFAULT_SWEEP };
    let ns = parse_difficulties(args.n.as_deref().unwrap_or(default))?;
    let puzzles = generate_puzzles(task, &ns, args.count, args.seed, cfg)?;
    let mut w = create(&args.out)?;
    write_puzzles(&mut w, &puzzles).map_err(|e| CliError::Internal(e.to_string()))?;
    finish_writer(w, &args.out)?;
    run.output(&args.out);
    let name = if task == Task::Kk { "gen-kk" } else { "gen-countdown" };
    let config = json!({"n": ns, "count": args.count, "seed": args.seed, "grammar": grammar_json(task, cfg)});
    Ok((name, config, manifest_path(&args.out)))
}

fn collect(puzzles: Vec<Puzzle>, family: Family, cc: CollectConfig, out: &Path, run: &mut Run) -> Result<(), CliError> {
    let collector = Collector::new(cc, ModelProfile::for_family(family)).map_err(|e| CliError::Input(e.to_string()))?;
    let outcome = collector.collect(&puzzles);
    for f in &outcome.failures {
        run.warn(format!("{}: {} (after {} attempt(s))", f.id, f.reason, f.attempts));
    }
    let mut w = create(out)?;
    write_transcripts(&mut w, &outcome.transcripts).map_err(|e| CliError::Internal(e.to_string()))?;
    finish_writer(w, out)?;
    run.output(out);
    if outcome.transcripts.is_empty() && !puzzles.is_empty() {
        return Err(CliError::Internal(format!("all {} requests failed", puzzles.len())));
    }
    Ok(())
}

fn split_roles(corpus: &[Transcript]) -> (Vec<Transcript>, Vec<Transcript>) {
    corpus.iter().cloned().partition(|t| t.role == Role::Aha)
}

fn tokens_table(corpus: &[Transcript], stoplist: &[String], think_only: bool, top: Option<usize>) -> Result<Table, CliError> {
    let (aha, noaha) = split_roles(corpus);
    let a = beginning_token_distribution(&aha, stoplist, think_only);
    let b = beginning_token_distribution(&noaha, stoplist, think_only);
    let contrast = contrast_probability(&a, &b).map_err(|e| CliError::Input(e.to_string()))?;
    let Some(k) = top else { return Ok(contrast.to_table()) };
    let mut rows = top_k_contrast(&contrast, k, Side::Aha).map_err(|e| CliError::Input(e.to_string()))?;
    for r in top_k_contrast(&contrast, k, Side::NoAha).map_err(|e| CliError::Input(e.to_string()))? {
        if !rows.iter().any(|x| x.token == r.token) {
            rows.push(r);
        }
    }
    let kept = ahakit_core::lingstats::ContrastTable { rows: rows.into_iter().cloned().collect() };
    Ok(kept.to_table())
}

fn distribution_table(corpus: &[Transcript], stoplist: &[String], think_only: bool) -> Table {
    let mut groups: BTreeMap<(String, Role), Vec<Transcript>> = BTreeMap::new();
    for t in corpus {
        groups.entry((t.model.clone(), t.role)).or_default().push(t.clone());
    }
    let mut table = Table::new(["model", "role", "token", "count", "proportion"]);
    for ((model, role), ts) in groups {
        let dist = beginning_token_distribution(&ts, stoplist, think_only);
        let mut rows: Vec<(&String, &u64)> = dist.counts.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (token, count) in rows {
            table.push(vec![
                Cell::from(model.as_str()),
                Cell::from(role.as_str()),
                Cell::from(token.as_str()),
                Cell::Int(*count as i64),
                Cell::Float(dist.proportion(token)),
            ]);
        }
    }
    table
}

fn uncertainty_options(uc: &crate::config::UncertaintyConfig) -> UncertaintyOptions {
    UncertaintyOptions {
        mean: if uc.geometric { Mean::Geometric } else { Mean::Arithmetic },
        unit: if uc.token_level { Unit::Token } else { Unit::Sentence },
        think_only: uc.think_only,
    }
}

fn write_evidence(report: &CollapseReport, path: &Path, run: &mut Run) -> Result<(), CliError> {
    write_json(&report.transcripts, path, Some(run))
}

fn rasm(
    corpus: &[Transcript],
    sets: &TokenSets,
    grid_points: Option<usize>,
    out: &Path,
    stats_out: &Path,
    format: Format,
    run: &mut Run,
) -> Result<(), CliError> {
    let grid = match grid_points {
        Some(0) => return Err(CliError::Input("grid_points must be positive".into())),
        Some(n) => KdeGrid::Points(n),
        None => KdeGrid::Auto,
    };
    let summaries = rasm_summaries(corpus, sets, &grid).map_err(|e| CliError::Input(e.to_string()))?;
    for s in &summaries {
        if s.mean_coverage < 0.5 {
            run.warn(format!(
                "{} {} n={}: observed alternatives cover only {:.3} of the probability mass",
                s.key.model, s.key.task, s.key.difficulty, s.mean_coverage
            ));
        }
    }
    write_table(&density_table(&summaries), out, format, run)?;
    write_table(&stats_table(&summaries), stats_out, format, run)
}

fn latent_dir(dir: &Path) -> Result<(Vec<PathBuf>, PathBuf), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("layer_") && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!("no layer_*.bin files in {}", dir.display())));
    }
    Ok((files, dir.join("labels.json")))
}

fn latent(
    files: &[PathBuf],
    labels: &Path,
    joint: bool,
    out: &Path,
    pc2_out: Option<&Path>,
    format: Format,
    run: &mut Run,
) -> Result<(), CliError> {
    let mut layers = Vec::with_capacity(files.len());
    for f in files {
        layers.push(load_activations(f, labels).map_err(|e| CliError::Input(format!("{}: {e}", f.display())))?);
        run.input(f);
    }
    run.input(labels);
    let mode = if joint { SweepMode::Joint } else { SweepMode::PerTask };
    let report = layer_sweep(&layers, mode).map_err(|e| CliError::Input(e.to_string()))?;
    for r in &report.layers {
        if let Some(e) = &r.error {
            run.warn(format!("layer {} ({}): {e}", r.layer, r.group));
        }
    }
    if report.layers.iter().all(|r| r.error.is_some()) {
        return Err(CliError::Internal("no layer could be analysed".into()));
    }
    write_table(&silhouette_table(&report), out, format, run)?;
    if let Some(p) = pc2_out {
        write_table(&projection_table(&report, &layers), p, format, run)?;
    }
    Ok(())
}

fn report(
    inputs: &[PathBuf],
    sets: Option<&Path>,
    latent_dirs: &[PathBuf],
    out_dir: &Path,
    format: Format,
    cfg: &ToolConfig,
    run: &mut Run,
) -> Result<Value, CliError> {
    let ext = format_name(format);
    let file = |name: &str| out_dir.join(format!("{name}.{ext}"));
    let corpus = read_corpus(inputs, run)?;

    match tokens_table(&corpus, &cfg.tokens.stoplist, cfg.tokens.think_only, None) {
        Ok(t) => write_table(&t, &file("tokens"), format, run)?,
        Err(e) => run.warn(format!("token contrast skipped: {e}")),
    }
    write_table(
        &distribution_table(&corpus, &cfg.tokens.stoplist, cfg.tokens.think_only),
        &file("token_distribution"),
        format,
        run,
    )?;

    let opts = uncertainty_options(&cfg.uncertainty);
    write_table(&uncertainty_table(&aggregate_uncertainty(&corpus, &opts)), &file("uncertainty"), format, run)?;
    let top = most_uncertain_sentences(&corpus, cfg.uncertainty.top_k, cfg.uncertainty.dedupe, &opts)
        .map_err(|e| CliError::Input(e.to_string()))?;
    write_table(&top_uncertain_table(&top), &file("uncertain_sentences"), format, run)?;

    let collapse = collapse_rates(&corpus, &cfg.collapse);
    write_table(&collapse_table(&collapse), &file("collapse"), format, run)?;
    write_evidence(&collapse, &out_dir.join("collapse_evidence.json"), run)?;

    let sets = load_sets(sets, run)?;
    rasm(&corpus, &sets, cfg.rasm.grid_points, &file("rasm"), &file("rasm_stats"), format, run)?;

    for dir in latent_dirs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "latent".into());
        let (files, labels) = latent_dir(dir)?;
        latent(
            &files,
            &labels,
            cfg.latent.joint,
            &file(&format!("latent_{name}")),
            Some(&file(&format!("latent_{name}_pc2"))),
            format,
            run,
        )?;
    }

    Ok(json!({
        "tokens": cfg.tokens,
        "uncertainty": cfg.uncertainty,
        "collapse": cfg.collapse,
        "rasm": {"sets": sets.to_json(), "grid_points": cfg.rasm.grid_points},
        "latent": {"mode": if cfg.latent.joint { "joint" } else { "per-task" }},
        "format": ext,
    }))
}
