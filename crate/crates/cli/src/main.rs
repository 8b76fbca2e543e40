//! `sbcheck`: command-line front end for two-level adaptive system models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sbcheck_core::adapt::{self, Kind};
use sbcheck_core::ctl::{self, CtlError, Trace};
use sbcheck_core::flat::{self, FlatLTS, StateClass, WalkEnd};
use sbcheck_core::ingest::{self, IngestError};
use sbcheck_core::{Exec, SBSystem};

const OK: u8 = 0;
const FAILS: u8 = 1;
const USAGE: u8 = 2;
const ILL_FORMED: u8 = 3;

#[derive(Parser)]
#[command(name = "sbcheck", version, about = "Check adaptability of two-level self-adaptive system models")]
struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every structure label is satisfiable and the initial state is in region.
    Validate(FileArg),
    /// Build the flat transition system.
    Flatten {
        #[command(flatten)]
        file: FileArg,
        /// Emit Graphviz DOT.
        #[arg(long)]
        dot: bool,
    },
    /// Decide weak and/or strong adaptability.
    Adapt {
        #[command(flatten)]
        file: FileArg,
        #[command(flatten)]
        which: Which,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Print a witness or counterexample path when one exists.
        #[arg(long)]
        witness: bool,
        /// Report time spent per method.
        #[arg(long)]
        timing: bool,
    },
    /// Partition B-states by adaptation equivalence.
    Equiv {
        #[command(flatten)]
        file: FileArg,
        /// Use strong adaptability (default weak).
        #[arg(long, conflicts_with = "weak")]
        strong: bool,
        #[arg(long)]
        weak: bool,
    },
    /// Check a CTL formula on the flat transition system.
    Ctl {
        #[command(flatten)]
        file: FileArg,
        #[arg(long, short)]
        formula: String,
        #[arg(long)]
        witness: bool,
    },
    /// Random walk over the flat semantics.
    Simulate {
        #[command(flatten)]
        file: FileArg,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct FileArg {
    /// Model file (.sbs).
    file: PathBuf,
}

#[derive(Args)]
#[group(multiple = false)]
struct Which {
    #[arg(long)]
    weak: bool,
    #[arg(long)]
    strong: bool,
    #[arg(long)]
    both: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Relational,
    Ctl,
    Both,
}

struct Out {
    json: bool,
    color: bool,
}

impl Out {
    fn verdict(&self, holds: bool) -> String {
        let (word, code) = if holds { ("true", "32") } else { ("false", "31") };
        if self.color {
            format!("\x1b[{code}m{word}\x1b[0m")
        } else {
            word.to_string()
        }
    }

    fn alert(&self, text: &str) -> String {
        if self.color {
            format!("\x1b[1;31m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn emit_json(&self, v: &Value) {
        println!("{}", serde_json::to_string_pretty(v).expect("json value serialises"));
    }
}

fn color_enabled() -> bool {
    std::env::var("SBCHECK_COLOR").is_ok_and(|v| v == "1")
}

fn load(path: &Path) -> Result<SBSystem, u8> {
    ingest::load_path(path).map_err(|e| {
        match &e {
            IngestError::Io { .. } => eprintln!("error: {e}"),
            IngestError::At { .. } => eprintln!("error: {}:{e}", path.display()),
        }
        USAGE
    })
}

/// Loads a model and refuses ill-formed ones.
fn load_well_formed(path: &Path) -> Result<SBSystem, u8> {
    let sys = load(path)?;
    let report = sys.check_well_formed();
    if !report.is_ok() {
        for v in &report.violations {
            eprintln!("error: ill-formed model: {v}");
        }
        return Err(ILL_FORMED);
    }
    Ok(sys)
}

fn main() -> ExitCode {
    let default_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(move |info| {
        let msg = info.payload().downcast_ref::<String>().map(String::as_str).unwrap_or("");
        if msg.contains("Broken pipe") {
            std::process::exit(0);
        }
        default_hook(info);
    }));
    let cli = Cli::parse();
    let out = Out { json: cli.json, color: color_enabled() };
    let code = match run(cli.command, &out) {
        Ok(c) | Err(c) => c,
    };
    ExitCode::from(code)
}

fn run(cmd: Command, out: &Out) -> Result<u8, u8> {
    match cmd {
        Command::Validate(f) => validate(&f.file, out),
        Command::Flatten { file, dot } => flatten(&file.file, dot, out),
        Command::Adapt { file, which, method, witness, timing } => {
            let kinds = match (which.weak, which.strong) {
                (true, _) => vec![Kind::Weak],
                (_, true) => vec![Kind::Strong],
                _ => vec![Kind::Weak, Kind::Strong],
            };
            adapt_cmd(&file.file, &kinds, method, witness, timing, out)
        }
        Command::Equiv { file, strong, .. } => equiv(&file.file, if strong { Kind::Strong } else { Kind::Weak }, out),
        Command::Ctl { file, formula, witness } => ctl_cmd(&file.file, &formula, witness, out),
        Command::Simulate { file, steps, seed } => simulate(&file.file, steps, seed, out),
    }
}

fn validate(path: &Path, out: &Out) -> Result<u8, u8> {
    let sys = load(path)?;
    let report = sys.check_well_formed();
    if out.json {
        out.emit_json(&json!({
            "system": sys.name(),
            "well_formed": report.is_ok(),
            "b_states": sys.behaviour().len(),
            "s_states": sys.structure().len(),
            "violations": report.violations,
        }));
    } else if report.is_ok() {
        println!(
            "{}: well-formed ({} B-states, {} S-states, {} S-transitions)",
            sys.name(),
            sys.behaviour().len(),
            sys.structure().len(),
            sys.structure().transitions().len()
        );
    } else {
        println!("{}: ill-formed", sys.name());
        for v in &report.violations {
            println!("  {v}");
        }
    }
    Ok(if report.is_ok() { OK } else { ILL_FORMED })
}

fn flatten(path: &Path, dot: bool, out: &Out) -> Result<u8, u8> {
    if dot && out.json {
        eprintln!("error: --dot and --json are mutually exclusive");
        return Err(USAGE);
    }
    let sys = load_well_formed(path)?;
    let f = flat::flatten(&sys);
    if dot {
        print!("{}", flat::export_dot(&sys, &f));
    } else if out.json {
        println!("{}", flat::export_json(&sys, &f));
    } else {
        let count = |c: StateClass| (0..f.len()).filter(|&i| f.class(i) == c).count();
        println!(
            "{}: {} states, {} transitions ({} steady, {} adapting, {} stuck)",
            sys.name(),
            f.len(),
            f.edges().len(),
            count(StateClass::Steady),
            count(StateClass::Adapting),
            count(StateClass::Stuck)
        );
        for (i, s) in f.states().iter().enumerate() {
            let succ: Vec<String> = f.outgoing(i).map(|e| e.to.to_string()).collect();
            println!("  {i:>3} {:<8} {}  -> [{}]", class_name(f.class(i)), s.render(&sys), succ.join(", "));
        }
    }
    Ok(OK)
}

fn class_name(c: StateClass) -> &'static str {
    match c {
        StateClass::Steady => "steady",
        StateClass::Adapting => "adapting",
        StateClass::Stuck => "stuck",
    }
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Weak => "weak",
        Kind::Strong => "strong",
    }
}

fn trace_json(sys: &SBSystem, f: &FlatLTS, t: &Trace) -> Value {
    json!({
        "states": t.states.iter().map(|&i| f.state(i).render(sys)).collect::<Vec<_>>(),
        "loop_start": t.loop_start,
    })
}

fn print_trace(sys: &SBSystem, f: &FlatLTS, t: &Trace, title: &str) {
    println!("  {title}:");
    for (i, &s) in t.states.iter().enumerate() {
        let mark = if t.loop_start == Some(i) { "*" } else { " " };
        println!("   {mark}{} {}", s, f.state(s).render(sys));
    }
    if let Some(l) = t.loop_start {
        println!("    loops back to {}", f.state(t.states[l]).render(sys));
    }
}

struct Row {
    method: &'static str,
    holds: bool,
    took: Duration,
}

struct Report {
    kind: Kind,
    rows: Vec<Row>,
    trace: Option<Trace>,
}

impl Report {
    fn disagrees(&self) -> bool {
        self.rows.len() == 2 && self.rows[0].holds != self.rows[1].holds
    }
}

fn adapt_cmd(path: &Path, kinds: &[Kind], method: Method, witness: bool, timing: bool, out: &Out) -> Result<u8, u8> {
    let sys = load_well_formed(path)?;
    let f = flat::flatten(&sys);
    let reports: Vec<Report> = kinds
        .iter()
        .map(|&kind| {
            let mut rows = Vec::new();
            if method != Method::Ctl {
                let t0 = Instant::now();
                let holds = match kind {
                    Kind::Weak => adapt::is_weak_adaptable(&sys),
                    Kind::Strong => adapt::is_strong_adaptable(&sys),
                };
                rows.push(Row { method: "relational", holds, took: t0.elapsed() });
            }
            let mut trace = None;
            if method != Method::Relational || witness {
                let t0 = Instant::now();
                let r = match kind {
                    Kind::Weak => ctl::weak_adaptable_ctl(&sys, &f),
                    Kind::Strong => ctl::strong_adaptable_ctl(&sys, &f),
                };
                let took = t0.elapsed();
                if method != Method::Relational {
                    rows.push(Row { method: "ctl", holds: r.holds_at_init, took });
                }
                if witness {
                    trace = r.trace;
                }
            }
            Report { kind, rows, trace }
        })
        .collect();

    let cross = reports.iter().any(Report::disagrees).then(|| ctl::cross_check(&sys, &f, Exec::default()));
    let pair_of = |kind: Kind| -> Option<(String, String)> {
        let c = cross.as_ref()?;
        let a = if kind == Kind::Weak { &c.weak } else { &c.strong };
        a.mismatches.first().map(|(q, r)| (sys.behaviour().name(*q).to_string(), sys.structure().name(*r).to_string()))
    };

    if out.json {
        let mut verdicts = Vec::new();
        for rep in &reports {
            for row in &rep.rows {
                let mut v = json!({ "property": kind_name(rep.kind), "method": row.method, "holds": row.holds });
                if timing {
                    v["timing_ms"] = json!(row.took.as_secs_f64() * 1e3);
                }
                verdicts.push(v);
            }
        }
        let witnesses: Vec<Value> = reports
            .iter()
            .filter(|_| witness)
            .map(|rep| {
                json!({
                    "property": kind_name(rep.kind),
                    "path": rep.trace.as_ref().map_or(Value::Null, |t| trace_json(&sys, &f, t)),
                })
            })
            .collect();
        let discrepancies: Vec<Value> = reports
            .iter()
            .filter(|rep| rep.disagrees())
            .map(|rep| json!({ "property": kind_name(rep.kind), "pair": pair_of(rep.kind).map(|(q, r)| [q, r]) }))
            .collect();
        let mut doc = json!({ "system": sys.name(), "verdicts": verdicts, "discrepancies": discrepancies });
        if witness {
            doc["witnesses"] = Value::Array(witnesses);
        }
        out.emit_json(&doc);
    } else {
        for rep in &reports {
            for row in &rep.rows {
                let time = if timing { format!("  ({:.3} ms)", row.took.as_secs_f64() * 1e3) } else { String::new() };
                println!("{:<7}{:<11}{}{time}", kind_name(rep.kind), row.method, out.verdict(row.holds));
            }
            if let Some(t) = &rep.trace {
                let title = if rep.rows.iter().all(|r| r.holds) { "witness" } else { "counterexample" };
                print_trace(&sys, &f, t, title);
            }
        }
        for rep in reports.iter().filter(|r| r.disagrees()) {
            let pair = pair_of(rep.kind).map_or("none".to_string(), |(q, r)| format!("({q}, {r})"));
            println!(
                "{} {}: relational and CTL verdicts differ; minimal offending pair {pair}",
                out.alert("DISCREPANCY"),
                kind_name(rep.kind)
            );
        }
        if method == Method::Both && !reports.iter().any(Report::disagrees) {
            println!("methods agree");
        }
    }
    let all_hold = reports.iter().all(|rep| rep.rows.iter().all(|r| r.holds));
    let agree = !reports.iter().any(Report::disagrees);
    Ok(if all_hold && agree { OK } else { FAILS })
}

fn equiv(path: &Path, kind: Kind, out: &Out) -> Result<u8, u8> {
    let sys = load_well_formed(path)?;
    let p = adapt::equiv_partition(&sys, kind);
    let b = sys.behaviour();
    let blocks: Vec<Vec<&str>> = p.blocks.iter().map(|blk| blk.iter().map(|&q| b.name(q)).collect()).collect();
    if out.json {
        out.emit_json(&json!({ "system": sys.name(), "kind": kind_name(kind), "blocks": blocks }));
    } else {
        println!("{} {} adaptation equivalence: {} blocks", sys.name(), kind_name(kind), blocks.len());
        let rel = match kind {
            Kind::Weak => adapt::weak_relation(&sys),
            Kind::Strong => adapt::strong_relation(&sys),
        };
        for (i, blk) in p.blocks.iter().enumerate() {
            let q = blk[0];
            let row: Vec<&str> =
                sys.structure().state_ids().filter(|&r| rel.contains(q, r)).map(|r| sys.structure().name(r)).collect();
            println!("  {:>2}: {{{}}}  adaptable to {{{}}}", i + 1, blocks[i].join(", "), row.join(", "));
        }
    }
    Ok(OK)
}

fn ctl_cmd(path: &Path, text: &str, witness: bool, out: &Out) -> Result<u8, u8> {
    let f = match ctl::parse_ctl(text) {
        Ok(f) => f,
        Err(e) => {
            report_ctl_error(text, &e);
            return Err(USAGE);
        }
    };
    let sys = load_well_formed(path)?;
    let flat = flat::flatten(&sys);
    let res = match ctl::check_ctl(&sys, &flat, &f) {
        Ok(r) => r,
        Err(e) => {
            report_ctl_error(text, &e);
            return Err(USAGE);
        }
    };
    if out.json {
        let mut v = json!({
            "system": sys.name(),
            "formula": f.to_string(),
            "holds": res.holds_at_init,
            "satisfying": res.satisfying,
            "states": flat.len(),
        });
        if witness {
            v["witness"] = res.trace.as_ref().map_or(Value::Null, |t| trace_json(&sys, &flat, t));
        }
        out.emit_json(&v);
    } else {
        println!("{}: {}", f, out.verdict(res.holds_at_init));
        println!("  satisfied in {} of {} flat states", res.satisfying.len(), flat.len());
        if witness {
            match &res.trace {
                Some(t) => print_trace(&sys, &flat, t, if res.holds_at_init { "witness" } else { "counterexample" }),
                None => println!("  no path available for this formula shape"),
            }
        }
    }
    Ok(if res.holds_at_init { OK } else { FAILS })
}

fn report_ctl_error(text: &str, e: &CtlError) {
    eprintln!("error: {e}");
    let pos = match e {
        CtlError::Syntax { pos, .. } => Some(*pos),
        CtlError::Formula(fe) => Some(fe.pos()),
        _ => None,
    };
    if let Some(pos) = pos {
        eprintln!("  {text}");
        eprintln!("  {}^", " ".repeat(text[..pos.min(text.len())].chars().count()));
    }
}

fn simulate(path: &Path, steps: usize, seed: u64, out: &Out) -> Result<u8, u8> {
    let sys = load_well_formed(path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walk = flat::random_walk(&sys, steps, &mut rng);
    let end = match walk.end {
        WalkEnd::Completed => "completed",
        WalkEnd::Deadlock => "deadlock",
    };
    if out.json {
        let steps: Vec<Value> =
            walk.steps.iter().map(|t| json!({ "rule": t.rule(), "to": t.to.render(&sys) })).collect();
        out.emit_json(&json!({
            "system": sys.name(),
            "seed": seed,
            "start": walk.start.render(&sys),
            "steps": steps,
            "end": end,
        }));
    } else {
        println!("{:>4}  {:<10}  {}", 0, "", walk.start.render(&sys));
        for (i, t) in walk.steps.iter().enumerate() {
            println!("{:>4}  {:<10}  {}", i + 1, format!("{:?}", t.rule()), t.to.render(&sys));
        }
        if walk.end == WalkEnd::Deadlock {
            println!("no successor after {} steps", walk.steps.len());
        }
    }
    Ok(OK)
}
