use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use surfgen::{formats, ModelFile, Threaded};
use surfgen_core::evalkit::{self, Judgment, SynthGrammar};
use surfgen_core::nlg1::{nlg1_generate, train_nlg1, FrequencyTable};
use surfgen_core::nlg2::{nlg2_search, train_nlg2, Nlg2Config};
use surfgen_core::nlg3::{nlg3_search, train_nlg3, Nlg3Config};
use surfgen_core::{AttributeSet, Generated, MaxentModel, Template};

const NO_OUTPUT: &str = "<no output>";

#[derive(Parser)]
#[command(name = "surfgen", version, about = "Trainable surface generation from attribute sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator and write a model file.
    Train(TrainArgs),
    /// Print the best templates for an attribute set.
    Generate(GenerateArgs),
    /// Substitute attribute values into templates read from stdin.
    Fill(FillArgs),
    /// Score judgments, or run a full synthetic evaluation.
    Evaluate(EvaluateArgs),
    /// Write a synthetic corpus, treebank and test set.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum System {
    Nlg1,
    Nlg2,
    Nlg3,
}

impl System {
    fn name(self) -> &'static str {
        match self {
            System::Nlg1 => "nlg1",
            System::Nlg2 => "nlg2",
            System::Nlg3 => "nlg3",
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    system: System,
    /// Template corpus (nlg1, nlg2).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Dependency treebank (nlg3).
    #[arg(long)]
    treebank: Option<PathBuf>,
    /// Feature cutoff K [default: 3 for nlg2, 10 for nlg3].
    #[arg(long)]
    cutoff: Option<u32>,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value = "1")]
    workers: NonZeroUsize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated attributes, e.g. `$city-fr,$city-to`.
    #[arg(long, allow_hyphen_values = true)]
    attrs: String,
    /// Fail unless the model was trained for this system.
    #[arg(long, value_enum)]
    system: Option<System>,
    /// Beam width N [default: 10 for nlg2, 5 for nlg3].
    #[arg(long)]
    beam: Option<usize>,
    /// Length cap M (nlg2: tokens including stop; nlg3: tree size).
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    /// Children per head and side, M' (nlg3).
    #[arg(long, default_value_t = 10)]
    max_children: usize,
}

#[derive(Args)]
struct FillArgs {
    #[arg(long)]
    bindings: PathBuf,
    /// Template to fill; read from stdin when absent. Lines of the form
    /// `probability<TAB>template` are accepted.
    template: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Judgment file to score.
    #[arg(long, conflicts_with = "synthetic")]
    judgments: Option<PathBuf>,
    /// Test templates whose attribute sets weight the judgments.
    #[arg(long, conflicts_with = "synthetic")]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "nlg1")]
    baseline: String,
    /// Generate a synthetic corpus, train all three systems and judge them
    /// against the grammar.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training templates for --synthetic.
    #[arg(long, default_value_t = 6000)]
    size: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value = "1")]
    workers: NonZeroUsize,
    /// Write the synthetic judgments here.
    #[arg(long, requires = "synthetic")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of training templates; the test set gets a quarter as many.
    #[arg(long, default_value_t = 6000)]
    size: usize,
    /// Output directory for train.txt, train.trees.jsonl and test.txt.
    #[arg(long)]
    out: PathBuf,
}

type Result<T> = std::result::Result<T, String>;

fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_file<T>(path: &Path, f: impl FnOnce(&str) -> std::result::Result<T, formats::FormatError>) -> Result<T> {
    f(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("-".into(), |p| p.display().to_string())
}

fn train(args: TrainArgs) -> Result<()> {
    let cutoff = args.cutoff.unwrap_or(match args.system {
        System::Nlg3 => Nlg3Config::default().cutoff,
        _ => Nlg2Config::default().cutoff,
    });
    match args.system {
        System::Nlg3 if args.treebank.is_none() => usage_error("nlg3 training needs --treebank"),
        System::Nlg1 | System::Nlg2 if args.corpus.is_none() => {
            usage_error("nlg1 and nlg2 training need --corpus")
        }
        _ => {}
    }
    if cutoff == 0 {
        usage_error("--cutoff must be at least 1");
    }
    eprintln!(
        "config: command=train system={} corpus={} treebank={} cutoff={} iters={} tol={} workers={} out={}",
        args.system.name(),
        show(&args.corpus),
        show(&args.treebank),
        cutoff,
        args.iters,
        args.tol,
        args.workers,
        args.out.display()
    );
    let exec = Threaded::new(args.workers);
    let progress = |i: usize, ll: f64| println!("iter {i}\tlog-likelihood {ll}");
    let model = match args.system {
        System::Nlg1 => {
            let corpus = parse_file(args.corpus.as_deref().unwrap(), formats::read_corpus)?;
            let table = train_nlg1(&corpus);
            eprintln!(
                "trained nlg1: {} templates, {} attribute sets",
                table.total(),
                table.attribute_sets().count()
            );
            ModelFile::Nlg1(table)
        }
        System::Nlg2 => {
            let corpus = parse_file(args.corpus.as_deref().unwrap(), formats::read_corpus)?;
            let (m, d) = train_nlg2(&corpus, cutoff, args.iters, args.tol, &exec, progress);
            report_training(&m, &d);
            ModelFile::Maxent(m)
        }
        System::Nlg3 => {
            let bank = parse_file(args.treebank.as_deref().unwrap(), formats::read_treebank)?;
            let (m, d) = train_nlg3(&bank, cutoff, args.iters, args.tol, &exec, progress);
            report_training(&m, &d);
            ModelFile::Maxent(m)
        }
    };
    write(&args.out, &formats::write_model(&model))
}

fn report_training(m: &MaxentModel, d: &surfgen_core::maxent::TrainDiagnostics) {
    eprintln!(
        "trained {}: {} words, {} features, {} iterations, converged={}, gap={}",
        m.schema(),
        m.vocab().len(),
        m.features().len(),
        d.iterations,
        d.converged,
        d.final_gap
    );
}

fn format_prob(p: f64) -> String {
    if p >= 1e-3 || p == 0.0 {
        format!("{p:.6}")
    } else {
        format!("{p:.6e}")
    }
}

fn nlg1_ranked(table: &FrequencyTable, a: &AttributeSet, beam: usize) -> Vec<(f64, Template)> {
    let ranked = table.ranked(a);
    let total: u64 = ranked.iter().map(|(_, c)| c).sum();
    debug_assert_eq!(
        ranked.first().map(|(t, _)| (*t).clone()),
        nlg1_generate(table, a).output()
    );
    ranked
        .into_iter()
        .take(beam)
        .map(|(t, c)| (c as f64 / total as f64, t.clone()))
        .collect()
}

fn generate(args: GenerateArgs) -> Result<()> {
    let model = parse_file(&args.model, formats::read_model)?;
    if let Some(s) = args.system {
        if s.name() != model.system() {
            return Err(format!(
                "{} holds a {} model, not {}",
                args.model.display(),
                model.system(),
                s.name()
            ));
        }
    }
    let a = AttributeSet::parse(&args.attrs).map_err(|e| format!("--attrs: {e}"))?;
    let beam = args.beam.unwrap_or(match model.system() {
        "nlg3" => Nlg3Config::default().beam,
        _ => Nlg2Config::default().beam,
    });
    eprintln!(
        "config: command=generate system={} model={} attrs={} beam={} max-len={} max-children={}",
        model.system(),
        args.model.display(),
        a.canonical(),
        beam,
        args.max_len,
        args.max_children
    );
    let lines: Vec<(f64, Template)> = match &model {
        ModelFile::Nlg1(table) => {
            if beam == 0 {
                usage_error("--beam must be at least 1");
            }
            nlg1_ranked(table, &a, beam)
        }
        ModelFile::Maxent(m) if m.schema() == "nlg2" => {
            let cfg = Nlg2Config {
                beam,
                max_len: args.max_len,
                cutoff: m.cutoff(),
            };
            nlg2_search(m, &a, &cfg)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|s| (s.probability(), s.value))
                .collect()
        }
        ModelFile::Maxent(m) => {
            let cfg = Nlg3Config {
                beam,
                max_size: args.max_len,
                cutoff: m.cutoff(),
                max_children: args.max_children,
            };
            nlg3_search(m, &a, &cfg)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|s| (s.probability(), s.value.linearize()))
                .collect()
        }
    };
    if lines.is_empty() {
        println!("{NO_OUTPUT}");
        eprintln!("no candidate expresses {a}");
        return Ok(());
    }
    let mut out = String::new();
    for (p, t) in lines {
        let _ = writeln!(out, "{}\t{}", format_prob(p), t);
    }
    print!("{out}");
    Ok(())
}

fn fill(args: FillArgs) -> Result<()> {
    let bindings = parse_file(&args.bindings, formats::read_bindings)?;
    eprintln!(
        "config: command=fill bindings={} template={}",
        args.bindings.display(),
        args.template.as_deref().unwrap_or("<stdin>")
    );
    let inputs: Vec<String> = match args.template {
        Some(t) => vec![t],
        None => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<_>>()
            .map_err(|e| format!("stdin: {e}"))?,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in inputs {
        let text = line.rsplit('\t').next().unwrap_or("");
        if text.trim().is_empty() {
            continue;
        }
        let filled = if text == NO_OUTPUT {
            text.to_string()
        } else {
            let t: Template = text.parse().map_err(|e| format!("{text:?}: {e}"))?;
            surfgen_core::corpus::fill_slots(&t, &bindings).map_err(|e| e.to_string())?
        };
        writeln!(out, "{filled}").map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (judgments, counts) = if args.synthetic {
        eprintln!(
            "config: command=evaluate synthetic=true seed={} size={} iters={} tol={} workers={} baseline={} out={}",
            args.seed,
            args.size,
            args.iters,
            args.tol,
            args.workers,
            args.baseline,
            show(&args.out)
        );
        let (j, c) = synthetic_judgments(&args)?;
        if let Some(path) = &args.out {
            write(path, &formats::write_judgments(&j))?;
        }
        (j, c)
    } else {
        let (Some(jpath), Some(cpath)) = (&args.judgments, &args.corpus) else {
            usage_error("evaluate needs --judgments and --corpus, or --synthetic");
        };
        eprintln!(
            "config: command=evaluate judgments={} corpus={} baseline={}",
            jpath.display(),
            cpath.display(),
            args.baseline
        );
        let judgments = parse_file(jpath, formats::read_judgments)?;
        let test = parse_file(cpath, formats::read_corpus)?;
        (judgments, evalkit::dedupe_attribute_sets(&test))
    };
    let report = evalkit::score_report(&judgments, &counts, &args.baseline).map_err(|e| e.to_string())?;
    print!("{report}");
    Ok(())
}

type Counts = Vec<(AttributeSet, u64)>;

fn synthetic_judgments(args: &EvaluateArgs) -> Result<(Vec<Judgment>, Counts)> {
    if args.size == 0 {
        usage_error("--size must be at least 1");
    }
    let grammar = SynthGrammar::default();
    let corpus = evalkit::synth_corpus(&grammar, args.seed, args.size);
    let exec = Threaded::new(args.workers);
    let quiet = |_: usize, _: f64| {};
    let n1 = train_nlg1(&corpus.train);
    let c2 = Nlg2Config::default();
    let c3 = Nlg3Config::default();
    let (m2, _) = train_nlg2(&corpus.train, c2.cutoff, args.iters, args.tol, &exec, quiet);
    let (m3, _) = train_nlg3(&corpus.treebank, c3.cutoff, args.iters, args.tol, &exec, quiet);
    let counts = evalkit::dedupe_attribute_sets(&corpus.test);
    let mut judgments = Vec::with_capacity(3 * counts.len());
    for (a, _) in &counts {
        let outputs = [
            ("nlg1", nlg1_generate(&n1, a)),
            ("nlg2", surfgen_core::nlg2::nlg2_generate(&m2, a, &c2).unwrap_or(Generated::NoOutput)),
            ("nlg3", surfgen_core::nlg3::nlg3_generate(&m3, a, &c3).unwrap_or(Generated::NoOutput)),
        ];
        for (system, out) in outputs {
            judgments.push(Judgment::new(system, a.clone(), grammar.judge(a, &out)));
        }
    }
    Ok((judgments, counts))
}

fn synth(args: SynthArgs) -> Result<()> {
    if args.size == 0 {
        usage_error("--size must be at least 1");
    }
    eprintln!(
        "config: command=synth seed={} size={} out={}",
        args.seed,
        args.size,
        args.out.display()
    );
    let c = evalkit::synth_corpus(&SynthGrammar::default(), args.seed, args.size);
    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    write(&args.out.join("train.txt"), &formats::write_corpus(&c.train))?;
    write(&args.out.join("train.trees.jsonl"), &formats::write_treebank(&c.treebank))?;
    write(&args.out.join("test.txt"), &formats::write_corpus(&c.test))?;
    println!(
        "wrote {} training templates, {} trees, {} test templates ({} novel attribute sets)",
        c.train.len(),
        c.treebank.len(),
        c.test.len(),
        c.novel.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Fill(a) => fill(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
