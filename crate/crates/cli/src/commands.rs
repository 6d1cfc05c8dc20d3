use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use vgraph_core::graph::{generate_hierarchical_sbm, load_communities, CommunityFormat};
use vgraph_core::hierarchy::{assign_hierarchical, hierarchical_memberships, train_hierarchical, CommunityTree};
use vgraph_core::io::{read_labels, write_embeddings, write_id_map, write_loss_csv, write_memberships, Checkpoint};
use vgraph_core::metrics::{classify_nodes, modularity, nmi, overlapping_f1, overlapping_jaccard};
use vgraph_core::model::{all_memberships, assign, MembershipVector, Table};
use vgraph_core::oracle::{verify_model, verify_random, Check};
use vgraph_core::{generate_sbm, load_edge_list, AssignMode, CommunitySet, Graph, ModelParams};

use crate::config::*;

/// Largest graph whose memberships `verify` recomputes by brute force.
const BRUTE_FORCE_NODES: usize = 3000;

/// Runs one command. `Ok(false)` means it ran to completion but a check failed.
pub fn run(cli: Cli) -> Result<bool> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => train(a, &file).map(|()| true),
        Command::Detect(a) => detect(a, &file).map(|()| true),
        Command::Eval(a) => eval(a, &file).map(|()| true),
        Command::Embed(a) => embed(a, &file).map(|()| true),
        Command::Synth(a) => synth(a, &file).map(|()| true),
        Command::Verify(a) => verify(a, &file),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> vgraph_core::Result<()>,
{
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)?;
        Ok(())
    })
}

fn out_dir(flag: &Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    let dir = require_out(flag, file)?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load_graph(path: &Path) -> Result<Graph> {
    let (g, report) = load_edge_list(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if report.self_loops + report.duplicates > 0 {
        warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            report.self_loops,
            report.duplicates
        );
    }
    info!("{}: {} nodes, {} edges", path.display(), g.node_count(), g.edge_count());
    Ok(g)
}

fn load_sets(paths: &[PathBuf], format: TruthFormat, g: &Graph) -> Result<Vec<CommunitySet>> {
    let format = match format {
        TruthFormat::Snap => CommunityFormat::Snap,
        TruthFormat::Circles => CommunityFormat::Circles,
    };
    paths
        .iter()
        .map(|p| {
            let (set, unknown) = load_communities(open(p)?, g, format).with_context(|| format!("reading {}", p.display()))?;
            if unknown > 0 {
                warn!("{}: skipped {unknown} labels not in the graph", p.display());
            }
            Ok(set)
        })
        .collect()
}

fn load_checkpoint(flag: &Option<PathBuf>, file: &FileConfig) -> Result<Checkpoint> {
    let Some(path) = flag.clone().or_else(|| file.checkpoint.clone()) else {
        bail!("a checkpoint is required (--checkpoint)");
    };
    let path = resolve(path)?;
    Checkpoint::load(&path).with_context(|| format!("reading {}", path.display()))
}

fn chosen_params(ck: &Checkpoint, final_params: bool) -> Result<&ModelParams> {
    if !final_params {
        return Ok(&ck.params);
    }
    match &ck.final_params {
        Some(p) => Ok(p),
        None => bail!("checkpoint holds no final parameters"),
    }
}

/// The assignment rule and whether a tree is involved.
fn resolve_mode(flag: Option<Mode>, file: &FileConfig, tree: Option<&CommunityTree>) -> Result<Mode> {
    let mode = flag.or(file.mode).unwrap_or(if tree.is_some() {
        Mode::Hierarchical
    } else {
        Mode::Nonoverlapping
    });
    if mode == Mode::Hierarchical && tree.is_none() {
        bail!("hierarchical mode needs a tree model (--tree)");
    }
    Ok(mode)
}

fn assign_mode(mode: Mode) -> AssignMode {
    match mode {
        Mode::Overlapping => AssignMode::Overlapping,
        Mode::Nonoverlapping | Mode::Hierarchical => AssignMode::Nonoverlapping,
    }
}

/// Community sets from a model: one for a flat model, one per depth for a tree.
fn extract(params: &ModelParams, tree: Option<&CommunityTree>, g: &Graph, mode: Mode) -> Result<Vec<CommunitySet>> {
    Ok(match tree {
        Some(t) => assign_hierarchical(params, t, g, assign_mode(mode))?,
        None => vec![assign(params, g, assign_mode(mode))?],
    })
}

fn level_name(stem: &str, ext: &str, level: usize, levels: usize, tree: bool) -> String {
    if tree {
        format!("{stem}.level{}.{ext}", level + 1)
    } else {
        debug_assert_eq!(levels, 1);
        format!("{stem}.{ext}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LevelScores {
    communities: usize,
    unassigned: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    modularity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jaccard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Classification {
    micro_f1: f64,
    macro_f1: f64,
    train_fraction: f64,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Report {
    mode: Mode,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    levels: Vec<LevelScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<Classification>,
}

fn score(g: &Graph, pred: &CommunitySet, truth: Option<&CommunitySet>, mode: Mode) -> Result<LevelScores> {
    let mut s = LevelScores {
        communities: pred.nonempty().count(),
        unassigned: pred.unassigned_count(),
        modularity: None,
        nmi: None,
        f1: None,
        jaccard: None,
    };
    if mode == Mode::Overlapping {
        let Some(truth) = truth else {
            bail!("overlapping mode is scored against ground truth (--truth)");
        };
        s.f1 = Some(overlapping_f1(pred, truth)?);
        s.jaccard = Some(overlapping_jaccard(pred, truth)?);
    } else {
        if !pred.is_nonoverlapping() {
            bail!("predicted communities overlap; use --mode overlapping");
        }
        s.modularity = Some(modularity(g, pred)?);
        if let Some(truth) = truth {
            if !truth.is_nonoverlapping() {
                bail!("ground-truth communities overlap; use --mode overlapping");
            }
            s.nmi = Some(nmi(pred, truth)?);
        }
    }
    Ok(s)
}

fn score_levels(g: &Graph, preds: &[CommunitySet], truth: &[CommunitySet], mode: Mode) -> Result<Vec<LevelScores>> {
    if !truth.is_empty() && truth.len() != preds.len() {
        bail!(
            "{} ground-truth files for {} predicted levels",
            truth.len(),
            preds.len()
        );
    }
    preds
        .iter()
        .enumerate()
        .map(|(i, p)| score(g, p, truth.get(i), mode))
        .collect()
}

fn print_report(report: &Report) -> Result<()> {
    let mut out = io::stdout().lock();
    if !report.levels.is_empty() {
        let cell = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        writeln!(out, "level\tcommunities\tunassigned\tmodularity\tnmi\tf1\tjaccard")?;
        for (i, s) in report.levels.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                s.communities,
                s.unassigned,
                cell(s.modularity),
                cell(s.nmi),
                cell(s.f1),
                cell(s.jaccard)
            )?;
        }
    }
    if let Some(c) = &report.classification {
        writeln!(out, "micro_f1\t{:.6}\nmacro_f1\t{:.6}", c.micro_f1, c.macro_f1)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GraphInfo {
    nodes: usize,
    edges: usize,
    id_map_hash: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    started_unix: u64,
    wall_time_seconds: f64,
    data: &'a DataPaths,
    graph: GraphInfo,
    mode: Mode,
    tree: Option<&'a CommunityTree>,
    seed: u64,
    config: &'a vgraph_core::TrainConfig,
    best_iteration: usize,
    iterations: usize,
}

fn train(a: TrainArgs, file: &FileConfig) -> Result<()> {
    let data = DataPaths::merge(&a.data, file)?;
    let mut config = merge_train(&a.model, file);
    let tree = parse_tree(a.model.tree.as_deref().or(file.tree.as_deref()))?;
    let mode = resolve_mode(a.mode, file, tree.as_ref())?;
    let dir = out_dir(&a.out, file)?;
    let g = load_graph(data.edges()?)?;
    let truth = load_sets(&data.truth, data.truth_format, &g)?;
    if let Some(t) = &tree {
        config.communities = t.node_count();
    }
    config.validate()?;

    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let model = match &tree {
        Some(t) => train_hierarchical(&g, &config, t)?,
        None => vgraph_core::train(&g, &config)?,
    };
    let wall_time_seconds = clock.elapsed().as_secs_f64();
    info!(
        "trained {} iterations in {wall_time_seconds:.1}s; best total {} at iteration {}",
        config.iters,
        model.best_total(),
        model.best_iteration
    );

    let ck = Checkpoint::from_model(&g, &config, tree.as_ref(), &model);
    ck.save(&dir.join("model.ckpt"))?;
    write_file(&dir.join("loss.csv"), |out| write_loss_csv(&model.history, out))?;
    write_file(&dir.join("id_map.tsv"), |out| write_id_map(g.labels(), out))?;

    if !truth.is_empty() {
        let preds = extract(&ck.params, tree.as_ref(), &g, mode)?;
        let report = Report {
            mode,
            levels: score_levels(&g, &preds, &truth, mode)?,
            classification: None,
        };
        write_json(&dir.join("metrics.json"), &report)?;
        print_report(&report)?;
    }

    let manifest = Manifest {
        command: "train",
        version: env!("CARGO_PKG_VERSION"),
        started_unix,
        wall_time_seconds,
        data: &data,
        graph: GraphInfo {
            nodes: g.node_count(),
            edges: g.edge_count(),
            id_map_hash: g.id_map_hash(),
        },
        mode,
        tree: tree.as_ref(),
        seed: config.seed,
        config: &config,
        best_iteration: ck.best_iteration,
        iterations: ck.iterations,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn detect(a: DetectArgs, file: &FileConfig) -> Result<()> {
    let data = DataPaths::merge(&a.data, file)?;
    let ck = load_checkpoint(&a.checkpoint, file)?;
    let g = load_graph(data.edges()?)?;
    ck.check_graph(&g)?;
    let mode = resolve_mode(a.mode, file, ck.tree.as_ref())?;
    let dir = out_dir(&a.out, file)?;
    let params = chosen_params(&ck, a.final_params)?;

    let preds = extract(params, ck.tree.as_ref(), &g, mode)?;
    let memberships: Vec<Vec<Option<MembershipVector>>> = match &ck.tree {
        Some(t) => hierarchical_memberships(params, t, &g)?,
        None => vec![all_memberships(params, &g)],
    };
    let tree = ck.tree.is_some();
    for (l, (pred, m)) in preds.iter().zip(&memberships).enumerate() {
        let n = preds.len();
        write_file(&dir.join(level_name("communities", "txt", l, n, tree)), |out| pred.write_snap(&g, out))?;
        write_file(&dir.join(level_name("memberships", "tsv", l, n, tree)), |out| {
            write_memberships(&g, m, out)
        })?;
    }
    write_file(&dir.join("id_map.tsv"), |out| write_id_map(g.labels(), out))
}

fn eval(a: EvalArgs, file: &FileConfig) -> Result<()> {
    let data = DataPaths::merge(&a.data, file)?;
    if a.pred.is_empty() && data.labels.is_none() {
        bail!("nothing to evaluate: give --pred or --labels");
    }
    let g = load_graph(data.edges()?)?;
    let mode = a.mode.or(file.mode).unwrap_or(if a.pred.len() > 1 {
        Mode::Hierarchical
    } else {
        Mode::Nonoverlapping
    });
    let pred_paths = a.pred.into_iter().map(resolve).collect::<Result<Vec<_>>>()?;
    let preds = load_sets(&pred_paths, TruthFormat::Snap, &g)?;
    let truth = load_sets(&data.truth, data.truth_format, &g)?;
    if mode == Mode::Hierarchical && !truth.is_empty() && truth.len() != preds.len() {
        bail!("hierarchical mode needs one ground-truth file per predicted level");
    }
    let levels = score_levels(&g, &preds, &truth, mode)?;

    let classification = match &data.labels {
        Some(path) => {
            let ck = load_checkpoint(&a.checkpoint, file)?;
            ck.check_graph(&g)?;
            let (labels, classes, unknown) = read_labels(open(path)?, &g).with_context(|| format!("reading {}", path.display()))?;
            if unknown > 0 {
                warn!("{}: skipped {unknown} nodes not in the graph", path.display());
            }
            info!("{} classes", classes.len());
            let s = classify_nodes(ck.params.table(Table::Phi), &labels, a.train_fraction, a.seed)?;
            Some(Classification {
                micro_f1: s.micro_f1,
                macro_f1: s.macro_f1,
                train_fraction: a.train_fraction,
                seed: a.seed,
            })
        }
        None => None,
    };

    let report = Report {
        mode,
        levels,
        classification,
    };
    if let Some(path) = a.out.clone().or_else(|| file.out.clone()) {
        write_json(&path, &report)?;
    }
    print_report(&report)
}

fn embed(a: EmbedArgs, file: &FileConfig) -> Result<()> {
    let data = DataPaths::merge(&a.data, file)?;
    let ck = load_checkpoint(&a.checkpoint, file)?;
    if let Some(edges) = &data.edges {
        ck.check_graph(&load_graph(edges)?)?;
    }
    let params = chosen_params(&ck, a.final_params)?;
    let table = match a.table {
        EmbeddingTable::Phi => Table::Phi,
        EmbeddingTable::Varphi => Table::Varphi,
        EmbeddingTable::Psi => Table::Psi,
    };
    match a.out.clone().or_else(|| file.out.clone()) {
        Some(path) => write_file(&path, |out| write_embeddings(&ck.labels, params, table, out)),
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            write_embeddings(&ck.labels, params, table, &mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn synth(a: SynthArgs, file: &FileConfig) -> Result<()> {
    let dir = out_dir(&a.out, file)?;
    let tree = parse_tree(a.tree.as_deref().or(file.tree.as_deref()))?;
    let (g, levels) = match &tree {
        Some(t) => {
            if a.probs.is_empty() {
                bail!("a nested block model needs --probs, one per depth plus one");
            }
            generate_hierarchical_sbm(a.n, t.branching(), &a.probs, a.seed)?
        }
        None => {
            let (g, truth) = generate_sbm(a.n, a.k, a.p_in, a.p_out, a.seed)?;
            (g, vec![truth])
        }
    };
    info!("generated {} nodes, {} edges", g.node_count(), g.edge_count());
    write_file(&dir.join("edges.txt"), |out| g.write_edge_list(out))?;
    for (l, set) in levels.iter().enumerate() {
        let name = level_name("communities", "txt", l, levels.len(), tree.is_some());
        write_file(&dir.join(name), |out| set.write_snap(&g, out))?;
    }
    Ok(())
}

fn print_checks(checks: &[Check]) -> Result<bool> {
    let mut out = io::stdout().lock();
    for c in checks {
        writeln!(
            out,
            "{}\t{:<28}\tcases {:>8}\tworst {:>10.3e}\ttolerance {:.0e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.cases,
            c.worst,
            c.tolerance
        )?;
    }
    Ok(checks.iter().all(Check::passed))
}

fn verify(a: VerifyArgs, file: &FileConfig) -> Result<bool> {
    let checks = if a.checkpoint.is_some() || file.checkpoint.is_some() {
        let data = DataPaths::merge(&a.data, file)?;
        let ck = load_checkpoint(&a.checkpoint, file)?;
        let g = load_graph(data.edges()?)?;
        ck.check_graph(&g)?;
        if g.node_count() > BRUTE_FORCE_NODES {
            info!("skipping brute-force memberships above {BRUTE_FORCE_NODES} nodes");
        }
        verify_model(&ck.params, &g, a.sample_edges, BRUTE_FORCE_NODES, a.seed)?
    } else {
        verify_random(a.instances, a.seed)?
    };
    print_checks(&checks)
}
