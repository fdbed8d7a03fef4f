use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{trace_path, Cli, CliError, Command, Outcome, Tier, TrainArgs};
use crate::grouping::{build_membership, partition, GroupSet};
use crate::models::{
    gae_trace_csv, interpolate_latent, load_checkpoint, save_checkpoint, summarize_edges, train_gae,
    train_vgae, vgae_trace_csv, CheckpointError, EdgeSummary, EmbeddingValues, ModelConfig, ModelKind,
    TieredInput, TieredModel, TrainError,
};
use crate::molgraph::{parse_smiles, read_records, MolecularGraph, MoleculeRecord, NODE_FEATURE_DIM};
use crate::numerics::Matrix;

/// Edges listed per interpolation step.
const TOP_EDGES: usize = 5;

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Parse { input, out } => cmd_parse(&input, out.as_deref()),
        Command::Partition { input, out } => cmd_partition(&input, out.as_deref()),
        Command::Train(args) => cmd_train(&args),
        Command::Embed {
            checkpoint,
            input,
            tier,
            out,
        } => cmd_embed(&checkpoint, &input, tier, out.as_deref()),
        Command::Interp {
            checkpoint,
            smiles_a,
            smiles_b,
            steps,
            out,
        } => cmd_interp(&checkpoint, &smiles_a, &smiles_b, steps, out.as_deref()),
    }
}

/// Dense matrix with an explicit shape.
#[derive(Serialize)]
struct MatrixDoc {
    shape: [usize; 2],
    rows: Vec<Vec<f64>>,
}

impl From<&Matrix> for MatrixDoc {
    fn from(m: &Matrix) -> Self {
        MatrixDoc {
            shape: [m.rows(), m.cols()],
            rows: m.row_vecs(),
        }
    }
}

#[derive(Serialize)]
struct Failure {
    line: usize,
    smiles: String,
    error: String,
}

struct Molecule {
    record: MoleculeRecord,
    graph: MolecularGraph,
    groups: GroupSet,
}

impl Molecule {
    fn input(&self) -> TieredInput {
        TieredInput::from_graph(&self.graph, &self.groups).expect("a partition covers every atom")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses and partitions every record; failures are reported on stderr.
fn load(input: &Path) -> Result<(Vec<Molecule>, Vec<Failure>), CliError> {
    let text = std::fs::read_to_string(input).map_err(io_err(input))?;
    let (mut ok, mut failed) = (Vec::new(), Vec::new());
    for record in read_records(&text) {
        match parse_smiles(&record.smiles) {
            Ok(graph) => {
                let groups = partition(&graph);
                ok.push(Molecule { record, graph, groups });
            }
            Err(e) => {
                eprintln!("{}:{}: {e}", input.display(), record.line);
                failed.push(Failure {
                    line: record.line,
                    smiles: record.smiles,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok((ok, failed))
}

fn emit<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(doc).expect("documents serialize");
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ParseEntry {
    line: usize,
    name: String,
    smiles: String,
    atoms: usize,
    bonds: usize,
    rings: usize,
    elements: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct ParseReport {
    molecules: Vec<ParseEntry>,
    failures: Vec<Failure>,
}

fn cmd_parse(input: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (mols, failures) = load(input)?;
    let molecules = mols
        .into_iter()
        .map(|m| ParseEntry {
            line: m.record.line,
            name: m.record.name,
            smiles: m.record.smiles,
            atoms: m.graph.num_atoms(),
            bonds: m.graph.num_bonds(),
            rings: m.graph.ring_count(),
            elements: m.graph.element_counts(),
        })
        .collect();
    let partial = !failures.is_empty();
    emit(&ParseReport { molecules, failures }, out)?;
    Ok(Outcome { partial })
}

#[derive(Serialize)]
struct GroupEntry {
    kind: &'static str,
    atoms: Vec<usize>,
    formula: String,
}

fn group_entries(m: &Molecule) -> Vec<GroupEntry> {
    m.groups
        .groups()
        .iter()
        .map(|g| GroupEntry {
            kind: g.kind.as_str(),
            atoms: g.atoms.clone(),
            formula: m.graph.formula_of(g.atoms.iter().copied()),
        })
        .collect()
}

#[derive(Serialize)]
struct PartitionEntry {
    line: usize,
    name: String,
    smiles: String,
    groups: Vec<GroupEntry>,
    membership: MatrixDoc,
}

#[derive(Serialize)]
struct PartitionReport {
    molecules: Vec<PartitionEntry>,
    failures: Vec<Failure>,
}

fn cmd_partition(input: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (mols, mut failures) = load(input)?;
    let mut molecules = Vec::with_capacity(mols.len());
    for m in mols {
        let membership = build_membership(&m.groups, m.graph.num_atoms());
        match membership {
            Ok(mm) if mm.is_valid(1e-12) => molecules.push(PartitionEntry {
                groups: group_entries(&m),
                membership: MatrixDoc::from(&mm.matrix),
                line: m.record.line,
                name: m.record.name,
                smiles: m.record.smiles,
            }),
            other => {
                let error = match other {
                    Err(e) => e.to_string(),
                    Ok(_) => "membership rows are not stochastic".to_string(),
                };
                eprintln!("{}:{}: {error}", input.display(), m.record.line);
                failures.push(Failure {
                    line: m.record.line,
                    smiles: m.record.smiles,
                    error,
                });
            }
        }
    }
    let partial = !failures.is_empty();
    emit(&PartitionReport { molecules, failures }, out)?;
    Ok(Outcome { partial })
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::NonFinite { .. } => CliError::Numeric(format!("training aborted: {e}")),
        other => CliError::Usage(other.to_string()),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<Outcome, CliError> {
    let (mols, failures) = load(&args.input)?;
    if mols.is_empty() {
        return Err(CliError::Parse(format!(
            "{}: no parseable molecules to train on",
            args.input.display()
        )));
    }
    let config = ModelConfig {
        lambda_x: args.lambda_x,
        ..ModelConfig::new(args.dims, args.layers)
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data: Vec<TieredInput> = mols.iter().map(Molecule::input).collect();
    let train = args.train_config();
    let (model, csv, summary) = match args.model {
        ModelKind::Gae => {
            let (m, trace) = train_gae(&data, config, &train).map_err(train_error)?;
            let summary = match (trace.first(), trace.last()) {
                (Some(a), Some(b)) => format!("loss {} -> {}", a.loss, b.loss),
                _ => "no epochs run".to_string(),
            };
            (TieredModel::Gae(m), gae_trace_csv(&trace), summary)
        }
        ModelKind::Vgae => {
            let (m, trace) = train_vgae(&data, config, &train).map_err(train_error)?;
            let summary = match (trace.first(), trace.last()) {
                (Some(a), Some(b)) => format!("elbo {} -> {}, final kl {}", a.elbo, b.elbo, b.kl),
                _ => "no epochs run".to_string(),
            };
            (TieredModel::Vgae(m), vgae_trace_csv(&trace), summary)
        }
    };
    save_checkpoint(&model, &args.out).map_err(|e| match e {
        CheckpointError::Io(source) => CliError::Io {
            path: args.out.clone(),
            source,
        },
        other => CliError::Checkpoint(other.to_string()),
    })?;
    let csv_path = trace_path(&args.out);
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    println!(
        "trained {} on {} molecules for {} epochs: {summary}",
        args.model.as_str(),
        data.len(),
        args.epochs
    );
    Ok(Outcome {
        partial: !failures.is_empty(),
    })
}

fn open_checkpoint(path: &Path) -> Result<TieredModel, CliError> {
    let model = load_checkpoint(path).map_err(|e| match e {
        CheckpointError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Checkpoint(format!("{}: {other}", path.display())),
    })?;
    if model.config().d0 != NODE_FEATURE_DIM {
        return Err(CliError::Checkpoint(format!(
            "{}: checkpoint expects {} node features, molecules have {NODE_FEATURE_DIM}",
            path.display(),
            model.config().d0
        )));
    }
    Ok(model)
}

fn embed_values(model: &TieredModel, input: &TieredInput) -> Result<EmbeddingValues, CliError> {
    model
        .embed(input)
        .map_err(|e| CliError::Checkpoint(format!("checkpoint does not fit the input: {e}")))
}

#[derive(Serialize)]
struct MembershipDoc {
    node_to_group: MatrixDoc,
    group_to_graph: MatrixDoc,
}

#[derive(Serialize)]
struct EmbedEntry {
    line: usize,
    name: String,
    smiles: String,
    /// Atom indices (node tier) or group kinds (group tier) of the rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group_kinds: Option<Vec<&'static str>>,
    embedding: MatrixDoc,
    membership: MembershipDoc,
}

#[derive(Serialize)]
struct EmbedReport {
    model_kind: ModelKind,
    tier: &'static str,
    molecules: Vec<EmbedEntry>,
    failures: Vec<Failure>,
}

fn cmd_embed(checkpoint: &Path, input: &Path, tier: Tier, out: Option<&Path>) -> Result<Outcome, CliError> {
    let model = open_checkpoint(checkpoint)?;
    let (mols, failures) = load(input)?;
    let mut molecules = Vec::with_capacity(mols.len());
    for m in mols {
        let ti = m.input();
        let emb = embed_values(&model, &ti)?;
        let (embedding, atoms, group_kinds) = match tier {
            Tier::Node => (emb.z1, Some((0..m.graph.num_atoms()).collect()), None),
            Tier::Group => (
                emb.z2,
                None,
                Some(m.groups.groups().iter().map(|g| g.kind.as_str()).collect()),
            ),
            Tier::Graph => (emb.z3, None, None),
        };
        molecules.push(EmbedEntry {
            line: m.record.line,
            name: m.record.name,
            smiles: m.record.smiles,
            atoms,
            group_kinds,
            embedding: MatrixDoc::from(&embedding),
            membership: MembershipDoc {
                node_to_group: MatrixDoc::from(ti.m1()),
                group_to_graph: MatrixDoc::from(ti.m2()),
            },
        });
    }
    let partial = !failures.is_empty();
    emit(
        &EmbedReport {
            model_kind: model.kind(),
            tier: tier.as_str(),
            molecules,
            failures,
        },
        out,
    )?;
    Ok(Outcome { partial })
}

#[derive(Serialize)]
struct Endpoint {
    smiles: String,
    atoms: usize,
    graph_embedding: Vec<f64>,
}

/// Â statistics of one interpolated graph vector decoded against the atom
/// and group embeddings of endpoint A and of endpoint B.
#[derive(Serialize)]
struct InterpStep {
    step: usize,
    alpha: f64,
    graph_embedding: Vec<f64>,
    decoded_on_a: EdgeSummary,
    decoded_on_b: EdgeSummary,
}

#[derive(Serialize)]
struct InterpReport {
    model_kind: ModelKind,
    steps: usize,
    a: Endpoint,
    b: Endpoint,
    path: Vec<InterpStep>,
}

fn cmd_interp(
    checkpoint: &Path,
    smiles_a: &str,
    smiles_b: &str,
    steps: usize,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    if steps < 2 {
        return Err(CliError::Usage(format!("--steps must be at least 2, got {steps}")));
    }
    let model = open_checkpoint(checkpoint)?;
    let prepare = |label: &str, smiles: &str| -> Result<(TieredInput, EmbeddingValues), CliError> {
        let g = parse_smiles(smiles).map_err(|e| CliError::Parse(format!("molecule {label} `{smiles}`: {e}")))?;
        let input = TieredInput::from_graph(&g, &partition(&g)).expect("a partition covers every atom");
        let emb = embed_values(&model, &input)?;
        Ok((input, emb))
    };
    let (input_a, emb_a) = prepare("A", smiles_a)?;
    let (input_b, emb_b) = prepare("B", smiles_b)?;
    let za = emb_a.z3.row(0).to_vec();
    let zb = emb_b.z3.row(0).to_vec();
    let vectors = interpolate_latent(&za, &zb, steps).map_err(|e| CliError::Usage(e.to_string()))?;
    let decode_on = |input: &TieredInput, emb: &EmbeddingValues, z: &[f64]| -> Result<EdgeSummary, CliError> {
        let swapped = EmbeddingValues {
            z3: Matrix::from_vec(1, z.len(), z.to_vec()).expect("row vector"),
            ..emb.clone()
        };
        let (a_hat, _) = model
            .decode_values(&swapped, input.m1())
            .map_err(|e| CliError::Checkpoint(e.to_string()))?;
        Ok(summarize_edges(&a_hat, TOP_EDGES))
    };
    let mut path = Vec::with_capacity(steps);
    for (i, z) in vectors.into_iter().enumerate() {
        path.push(InterpStep {
            step: i,
            alpha: i as f64 / (steps - 1) as f64,
            decoded_on_a: decode_on(&input_a, &emb_a, &z)?,
            decoded_on_b: decode_on(&input_b, &emb_b, &z)?,
            graph_embedding: z,
        });
    }
    let report = InterpReport {
        model_kind: model.kind(),
        steps,
        a: Endpoint {
            smiles: smiles_a.to_string(),
            atoms: input_a.num_atoms(),
            graph_embedding: za,
        },
        b: Endpoint {
            smiles: smiles_b.to_string(),
            atoms: input_b.num_atoms(),
            graph_embedding: zb,
        },
        path,
    };
    emit(&report, out)?;
    Ok(Outcome { partial: false })
}
