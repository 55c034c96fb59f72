use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mag::graph::{
    build_community_dataset, read_graph_file, save_graph_file, EdgeListing, Graph, GraphFile,
};
use mag::metrics::{
    clustering_stats, degree_stats, mmd_report, molecule_report, two_way_modularity, CostCurve,
    Regime, count_attention_pairs,
};
use mag::numerics::Checkpoint;
use mag::tokenizer::{Tokenizer, TokenizerTrainer};
use mag::transformer::{
    generate_graph, tokenize_dataset, ScaleTransformer, SizeHistogram, TransformerTrainer,
};
use mag::{build_scale_schedule, Error, Result, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::{Cli, Command, DatasetName, Stage};

pub const LOG_HEADER: &str = "epoch,loss,accuracy,wall_seconds";

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.set_seed(s);
    }
    match cli.command {
        Command::Dataset { name, input } => dataset(&config, name, input, cli.out),
        Command::Train { stage, data, resume } => {
            if let Some(dir) = cli.out {
                config.paths.run_dir = dir;
            }
            let data = data.unwrap_or_else(|| config.paths.dataset_file());
            match stage {
                Stage::Tokenizer => train_tokenizer(&config, &data, resume),
                Stage::Transformer => train_transformer(&config, &data, resume),
            }
        }
        Command::Generate { count, class, nodes } => generate(&config, count, class, nodes, cli.out, started),
        Command::Evaluate {
            generated,
            reference,
            stats_csv,
        } => evaluate(&config, &generated, &reference, stats_csv, cli.out),
        Command::Bench { max_n } => bench(&config, max_n, cli.out),
    }
}

fn write_out(out: Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn dataset(config: &RunConfig, name: DatasetName, input: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let out = out.unwrap_or_else(|| config.paths.dataset_file());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let d = &config.dataset;
    match name {
        DatasetName::CommunitySmall => {
            let graphs = build_community_dataset(d.count, d.min_nodes, d.max_nodes, &d.community, config.seed)?;
            let labelled: Vec<(Graph, usize)> = graphs.into_iter().map(|g| (g, 0)).collect();
            save_graph_file(&out, None, &labelled)?;
            eprintln!("wrote {} graphs to {}", labelled.len(), out.display());
        }
        DatasetName::FromFile => {
            let input = input
                .or_else(|| d.path.clone())
                .ok_or_else(|| Error::Config("from-file needs --input or dataset.path".into()))?;
            let file = read_graph_file(&input, EdgeListing::UpperTriangle)?;
            if let Some(bad) = file.records.iter().find(|r| r.class >= d.class_count) {
                return Err(Error::Config(format!(
                    "class label {} outside dataset.class_count {}",
                    bad.class, d.class_count
                )));
            }
            let labelled: Vec<(Graph, usize)> = file.records.iter().map(|r| (r.graph.clone(), r.class)).collect();
            save_graph_file(&out, file.meta.as_ref(), &labelled)?;
            eprintln!("wrote {} graphs to {}", labelled.len(), out.display());
        }
    }
    Ok(())
}

/// Training split of the data file plus the held-out part written next to the checkpoints.
fn load_training(config: &RunConfig, data: &Path) -> Result<(GraphFile, Vec<Graph>, Vec<usize>)> {
    let file = read_graph_file(data, EdgeListing::UpperTriangle)?;
    if file.records.is_empty() {
        return Err(Error::Config(format!("{} holds no graphs", data.display())));
    }
    let split = config.dataset.spec().split(file.records.len());
    let graphs = split.train.iter().map(|&i| file.records[i].graph.clone()).collect();
    let classes = split.train.iter().map(|&i| file.records[i].class).collect();
    fs::create_dir_all(&config.paths.run_dir)?;
    let held: Vec<(Graph, usize)> = split
        .test
        .iter()
        .map(|&i| (file.records[i].graph.clone(), file.records[i].class))
        .collect();
    save_graph_file(config.paths.run_dir.join("test.jsonl"), file.meta.as_ref(), &held)?;
    Ok((file, graphs, classes))
}

fn open_log(path: &Path, resume: bool) -> Result<fs::File> {
    if resume && path.exists() {
        Ok(OpenOptions::new().append(true).open(path)?)
    } else {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{LOG_HEADER}")?;
        Ok(f)
    }
}

fn load_checkpoint(path: &Path, what: &str) -> Result<Checkpoint<f64>> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("{what} checkpoint {} not found", path.display())));
    }
    Checkpoint::load(path)
}

fn train_tokenizer(config: &RunConfig, data: &Path, resume: bool) -> Result<()> {
    let (file, graphs, _) = load_training(config, data)?;
    let path = config.paths.tokenizer_checkpoint();
    let (mut tokenizer, mut trainer) = if resume {
        let (t, mut tr) = TokenizerTrainer::<f64>::from_checkpoint(&load_checkpoint(&path, "tokenizer")?)?;
        tr.config.epochs = config.tokenizer_training.epochs;
        (t, tr)
    } else {
        let first = &graphs[0];
        let t = Tokenizer::new(config.tokenizer.clone(), first.node_dim(), first.edge_dim(), config.seed)?;
        let tr = TokenizerTrainer::new(config.tokenizer_training.clone(), config.schedule.clone(), &t)?;
        (t, tr)
    };
    let mut log = open_log(&config.paths.log("tokenizer"), resume)?;
    let kind = if file.is_molecular() { "molecule" } else { "graph" };
    while trainer.epoch < trainer.config.epochs {
        let e = trainer.train_epoch(&mut tokenizer, &graphs)?;
        writeln!(log, "{},{},{},{}", e.epoch, e.loss, e.edge_accuracy, e.wall_seconds)?;
        eprintln!(
            "tokenizer epoch {} loss {:.5} node_acc {:.4} edge_acc {:.4} codes {}",
            e.epoch, e.loss, e.node_accuracy, e.edge_accuracy, e.codes_used
        );
        let mut ck = trainer.to_checkpoint(&tokenizer);
        ck.set_meta("dataset_kind", kind);
        ck.save(&path)?;
    }
    if trainer.epoch == 0 || trainer.config.epochs == 0 {
        let mut ck = trainer.to_checkpoint(&tokenizer);
        ck.set_meta("dataset_kind", kind);
        ck.save(&path)?;
    }
    Ok(())
}

fn train_transformer(config: &RunConfig, data: &Path, resume: bool) -> Result<()> {
    let tok_ck = load_checkpoint(&config.paths.tokenizer_checkpoint(), "tokenizer")?;
    let tokenizer = Tokenizer::<f64>::from_checkpoint(&tok_ck)?;
    let (_, graphs, classes) = load_training(config, data)?;
    let path = config.paths.transformer_checkpoint();
    let (mut model, mut trainer) = if resume {
        let (m, mut tr) = TransformerTrainer::<f64>::from_checkpoint(&load_checkpoint(&path, "transformer")?)?;
        tr.config.epochs = config.transformer_training.epochs;
        (m, tr)
    } else {
        let m = ScaleTransformer::new(config.transformer.clone(), tokenizer.latent_dim(), config.seed)?;
        let tr = TransformerTrainer::new(config.transformer_training.clone(), &m)?;
        (m, tr)
    };
    if model.config().vocab != tokenizer.codebook_size() || model.latent_dim() != tokenizer.latent_dim() {
        return Err(Error::Checkpoint("transformer does not match the tokenizer codebook".into()));
    }
    let tokens = tokenize_dataset(&tokenizer, &graphs, Some(&classes), &config.schedule)?;
    let sizes: Vec<String> = graphs.iter().map(|g| g.n().to_string()).collect();
    let mut log = open_log(&config.paths.log("transformer"), resume)?;
    let save = |model: &ScaleTransformer<f64>, trainer: &TransformerTrainer<f64>| -> Result<()> {
        let mut ck = trainer.to_checkpoint(model);
        ck.set_meta("train_sizes", sizes.join(","));
        ck.set_meta("tokenizer_sha256", tok_ck.digest());
        ck.save(&path)
    };
    while trainer.epoch < trainer.config.epochs {
        let e = trainer.train_epoch(&mut model, tokenizer.codebook(), &tokens)?;
        writeln!(log, "{},{},{},{}", e.epoch, e.loss, e.accuracy, e.wall_seconds)?;
        eprintln!("transformer epoch {} loss {:.5} acc {:.4}", e.epoch, e.loss, e.accuracy);
        save(&model, &trainer)?;
    }
    if trainer.config.epochs == 0 {
        save(&model, &trainer)?;
    }
    Ok(())
}

fn generate(
    config: &RunConfig,
    count: usize,
    class: usize,
    nodes: Option<usize>,
    out: Option<PathBuf>,
    started: Instant,
) -> Result<()> {
    let tok_ck = load_checkpoint(&config.paths.tokenizer_checkpoint(), "tokenizer")?;
    let tr_ck = load_checkpoint(&config.paths.transformer_checkpoint(), "transformer")?;
    let tokenizer = Tokenizer::<f64>::from_checkpoint(&tok_ck)?;
    let transformer = ScaleTransformer::<f64>::from_checkpoint(&tr_ck)?;
    let digests = (tok_ck.digest(), tr_ck.digest());
    let sizes = SizeHistogram::from_sizes(
        tr_ck
            .meta("train_sizes")?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Checkpoint("bad train_sizes".into())))
            .collect::<Result<Vec<usize>>>()?,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut graphs = Vec::with_capacity(count);
    for _ in 0..count {
        let g = generate_graph(
            &tokenizer,
            &transformer,
            &config.schedule,
            &sizes,
            nodes,
            class,
            &config.sampling,
            &mut rng,
        )?;
        graphs.push((g, class));
    }
    let wall = started.elapsed().as_secs_f64();
    let mut meta = Map::new();
    meta.insert("seed".into(), json!(config.seed));
    meta.insert("count".into(), json!(count));
    meta.insert("class".into(), json!(class));
    meta.insert("tokenizer_sha256".into(), json!(digests.0));
    meta.insert("transformer_sha256".into(), json!(digests.1));
    meta.insert("schedule".into(), serde_json::to_value(&config.schedule)?);
    meta.insert("top_k".into(), json!(config.sampling.top_k));
    meta.insert("top_p".into(), json!(config.sampling.top_p));
    meta.insert("wall_seconds".into(), json!(wall));
    if tok_ck.meta("dataset_kind").ok() == Some("molecule") {
        meta.insert("kind".into(), Value::from("molecule"));
    }
    let mut buf = Vec::new();
    mag::graph::write_graphs(&mut buf, Some(&meta), &graphs)?;
    write_out(out, &String::from_utf8(buf).expect("JSON is UTF-8"))
}

fn evaluate(
    config: &RunConfig,
    generated: &Path,
    reference: &Path,
    stats_csv: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let gen = read_graph_file(generated, EdgeListing::UpperTriangle)?;
    let reference_file = read_graph_file(reference, EdgeListing::UpperTriangle)?;
    if gen.is_molecular() != reference_file.is_molecular() {
        return Err(Error::Config(
            "one input is molecular and the other is not; both files must share a schema".into(),
        ));
    }
    let (g, r) = (gen.graphs(), reference_file.graphs());
    if g.is_empty() || r.is_empty() {
        return Err(Error::Config("both inputs need at least one graph".into()));
    }
    let report = mmd_report(&g, &r, &config.evaluation)?;
    let mut text = String::new();
    let _ = writeln!(text, "degree_mmd={}", report.degree_mmd);
    let _ = writeln!(text, "clustering_mmd={}", report.clustering_mmd);
    let _ = writeln!(text, "orbit_mmd={}", report.orbit_mmd);
    let _ = writeln!(text, "sigma={}", report.sigma);
    let _ = writeln!(text, "clustering_bins={}", report.clustering_bins);
    let _ = writeln!(text, "generated={}", report.generated);
    let _ = writeln!(text, "reference={}", report.reference);
    let two = g.iter().filter(|x| two_way_modularity(x) > 0.2).count();
    let _ = writeln!(text, "two_community_fraction={}", two as f64 / g.len() as f64);
    if gen.is_molecular() {
        let m = molecule_report(&g, &r)?;
        let _ = writeln!(text, "validity={}", m.validity);
        let _ = writeln!(text, "uniqueness={}", m.uniqueness);
        let _ = writeln!(text, "novelty={}", m.novelty);
        let _ = writeln!(text, "no_valid_samples={}", m.no_valid_samples);
    }
    if let Some(path) = stats_csv {
        let mut csv = String::from("set,index,nodes,edges,mean_degree,mean_clustering,modularity\n");
        for (set, graphs) in [("generated", &g), ("reference", &r)] {
            for (i, x) in graphs.iter().enumerate() {
                let deg: f64 = degree_stats(x).iter().enumerate().map(|(d, p)| d as f64 * p).sum();
                let c = clustering_stats(x);
                let mean_c = c.iter().sum::<f64>() / c.len().max(1) as f64;
                let _ = writeln!(
                    csv,
                    "{set},{i},{},{},{deg},{mean_c},{}",
                    x.n(),
                    x.edge_count(),
                    two_way_modularity(x)
                );
            }
        }
        write_out(Some(path), &csv)?;
    }
    write_out(out, &text)
}

fn bench(config: &RunConfig, max_n: usize, out: Option<PathBuf>) -> Result<()> {
    let (base, growth) = (&config.schedule.base_set, config.schedule.growth);
    let mut csv = String::from("n,scales,node_wise,scale_wise\n");
    for n in 1..=max_n {
        let s = build_scale_schedule(n, base, growth)?;
        let _ = writeln!(
            csv,
            "{n},{},{},{}",
            s.len(),
            count_attention_pairs(Regime::NodeWise, &s),
            count_attention_pairs(Regime::ScaleWise, &s)
        );
    }
    let fit: Vec<_> = std::iter::successors(Some(16usize), |n| Some(n * 2))
        .take_while(|&n| n <= max_n)
        .map(|n| build_scale_schedule(n, base, growth))
        .collect::<Result<_>>()?;
    if fit.len() >= 4 {
        let curve = CostCurve::new(growth, &fit)?;
        eprintln!(
            "node_wise_slope={} scale_wise_slope={} gap={}",
            curve.node_wise_slope,
            curve.scale_wise_slope,
            curve.node_wise_slope - curve.scale_wise_slope
        );
    } else {
        eprintln!("slopes need max_n >= 128");
    }
    write_out(out, &csv)
}
