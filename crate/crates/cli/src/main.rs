use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tracescope_core::explorer::{Explorer, ExplorerConfig, ExplorerError};
use tracescope_core::ext::ExtensionRegistry;
use tracescope_core::index::{build_indexes, write_sidecar, IndexError, DEFAULT_BUFFER_SIZE};
use tracescope_core::prefs::{load_prefs, Preferences, PrefsError};
use tracescope_core::render::{screenshot_file_name, RenderError};
use tracescope_core::snapshot::ReplayError;
use tracescope_core::state::CounterSet;
use tracescope_server::api::{NodeView, StatsPayload};
use tracescope_server::{AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "tracescope", version, about = "Explore NS-2 wireless newtrace files")]
struct Cli {
    /// Output format for reports.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API (and the UI bundle, if given) with the trace open.
    Serve {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        prefs: Option<PathBuf>,
        /// Directory traces may be opened from; defaults to the trace's directory.
        #[arg(long)]
        root: Option<PathBuf>,
        /// Directory holding the browser UI bundle.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Print network and per-node counters at an event.
    Stats {
        #[arg(long)]
        trace: PathBuf,
        /// Event index; -1 is the initial state. Defaults to the last event.
        #[arg(long, allow_hyphen_values = true)]
        at: Option<i64>,
    },
    /// Render one frame to PNG.
    Screenshot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        event: i64,
        /// Output file; defaults to frame_<event>.png in the screenshot directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Draw partitions for this radio range in meters.
        #[arg(long)]
        range: Option<f64>,
        #[arg(long)]
        prefs: Option<PathBuf>,
    },
    /// Build the indexes and write the sidecar file next to the trace.
    Index {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Parse every line; exit 0 only when no event line is malformed.
    Validate {
        #[arg(long)]
        trace: PathBuf,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_CONTRACT: u8 = 3;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl ToString) -> Self {
        Self { code: EXIT_IO, message: message.to_string() }
    }

    fn contract(message: impl ToString) -> Self {
        Self { code: EXIT_CONTRACT, message: message.to_string() }
    }
}

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Io { .. } | IndexError::Sidecar(_) => Failure::io(e),
            _ => Failure::contract(e),
        }
    }
}

impl From<ExplorerError> for Failure {
    fn from(e: ExplorerError) -> Self {
        match e {
            ExplorerError::Index(e) | ExplorerError::Replay(ReplayError::Source(e)) => e.into(),
            ExplorerError::Render(RenderError::Io { .. }) => Failure::io(e),
            _ => Failure::contract(e),
        }
    }
}

impl From<PrefsError> for Failure {
    fn from(e: PrefsError) -> Self {
        match e {
            PrefsError::Io { .. } => Failure::io(e),
            _ => Failure::contract(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve { trace, port, bind, prefs, root, ui } => serve(&trace, port, &bind, prefs.as_deref(), root, ui),
        Command::Stats { trace, at } => stats(&trace, at, cli.format),
        Command::Screenshot { trace, event, out, range, prefs } => {
            screenshot(&trace, event, out, range, prefs.as_deref(), cli.format)
        }
        Command::Index { trace } => index(&trace, cli.format),
        Command::Validate { trace } => validate(&trace, cli.format),
    }
}

fn read_prefs(path: Option<&Path>) -> Result<Preferences, Failure> {
    let Some(path) = path else { return Ok(Preferences::default()) };
    let loaded = load_prefs(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(loaded.prefs)
}

fn open(trace: &Path) -> Result<Explorer, Failure> {
    let ex = Explorer::open(trace, &ExtensionRegistry::default(), ExplorerConfig::default())?;
    for n in &ex.meta().notices {
        eprintln!("note: {n}");
    }
    Ok(ex)
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("payloads serialize"));
}

fn serve(
    trace: &Path,
    port: u16,
    bind: &str,
    prefs: Option<&Path>,
    root: Option<PathBuf>,
    ui: Option<PathBuf>,
) -> Result<(), Failure> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let trace = trace.canonicalize().map_err(|e| Failure::io(format!("{}: {e}", trace.display())))?;
    let root = root.unwrap_or_else(|| trace.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut config = ServerConfig::new(&root);
    config.prefs = read_prefs(prefs)?;
    config.static_dir = ui;
    let state = AppState::new(config).map_err(|e| Failure::io(format!("{}: {e}", root.display())))?;
    let id = state
        .open_session(&trace.to_string_lossy())
        .map_err(|e| Failure::contract(format!("{}: {e}", trace.display())))?;
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| Failure { code: EXIT_USAGE, message: format!("bad address {bind}:{port}: {e}") })?;
    let rt = tokio::runtime::Runtime::new().map_err(Failure::io)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::io(format!("{addr}: {e}")))?;
        eprintln!("serving {} as session {id} on http://{addr}/", trace.display());
        tracescope_server::serve(listener, state).await.map_err(Failure::io)
    })
}

/// `stats --format json` output: the API's stats payload plus per-node rows.
#[derive(Serialize)]
struct StatsReport {
    #[serde(flatten)]
    stats: StatsPayload,
    nodes: Vec<NodeView>,
}

fn counter_row(out: &mut String, label: &str, c: &CounterSet) {
    let _ = writeln!(out, "  {label:<8} {:>12} {:>12} {:>12} {:>12}", c.sent, c.received, c.forwarded, c.dropped);
}

fn stats(trace: &Path, at: Option<i64>, format: Format) -> Result<(), Failure> {
    let mut ex = open(trace)?;
    let k = at.unwrap_or(ex.total_events() as i64 - 1);
    let stats = ex.stats(k)?;
    let raw_line = if k >= 0 { Some(ex.event(k as u64)?.raw_line) } else { None };
    let state = ex.state_at(k)?;
    let report = StatsReport {
        stats: StatsPayload { raw_line, stats },
        nodes: state.nodes().map(NodeView::from).collect(),
    };
    if format == Format::Json {
        print_json(&report);
        return Ok(());
    }
    let s = &report.stats.stats;
    let mut out = String::new();
    let _ = writeln!(out, "event {k} of {}", ex.total_events());
    if let Some(line) = &report.stats.raw_line {
        let _ = writeln!(out, "line: {line}");
    }
    let _ = writeln!(out, "\nnetwork bytes {:>12} {:>12} {:>12} {:>12}", "sent", "received", "forwarded", "dropped");
    counter_row(&mut out, "routing", &s.routing);
    counter_row(&mut out, "agent", &s.agent);
    let b = &s.agent_breakdown;
    let _ = writeln!(out, "  agent by class: CBR {}, TCP/ACK {}, other {}", b.cbr, b.tcp_ack, b.other);
    let _ = writeln!(
        out,
        "\n{:>5} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "node", "x", "y", "settled", "rtr sent", "rtr recv", "agt sent", "agt recv"
    );
    for n in &report.nodes {
        let _ = writeln!(
            out,
            "{:>5} {:>10.2} {:>10.2} {:>8} {:>10} {:>10} {:>10} {:>10}",
            n.node_id, n.x, n.y, n.settled, n.routing.sent, n.routing.received, n.agent.sent, n.agent.received
        );
    }
    print!("{out}");
    Ok(())
}

#[derive(Serialize)]
struct ScreenshotReport {
    path: PathBuf,
    event_index: i64,
    width: u32,
    height: u32,
    nodes: usize,
}

fn screenshot(
    trace: &Path,
    event: i64,
    out: Option<PathBuf>,
    range: Option<f64>,
    prefs: Option<&Path>,
    format: Format,
) -> Result<(), Failure> {
    let mut ex = open(trace)?;
    let prefs = read_prefs(prefs)?;
    let out = out.unwrap_or_else(|| prefs.screenshot_dir.join(screenshot_file_name(event)));
    ex.set_prefs(prefs);
    let img = ex.render(event, range)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }
    tracescope_core::render::export_png(&img, &out).map_err(ExplorerError::from)?;
    let report = ScreenshotReport {
        path: out,
        event_index: event,
        width: img.width(),
        height: img.height(),
        nodes: ex.meta().node_count,
    };
    match format {
        Format::Json => print_json(&report),
        Format::Text => println!("wrote {} ({}x{}, {} nodes)", report.path.display(), report.width, report.height, report.nodes),
    }
    Ok(())
}

#[derive(Serialize)]
struct IndexReport {
    sidecar: PathBuf,
    lines: u64,
    events: u64,
    nodes: usize,
}

fn index(trace: &Path, format: Format) -> Result<(), Failure> {
    let idx = build_indexes(trace, DEFAULT_BUFFER_SIZE)?;
    let sidecar = write_sidecar(trace, &idx)?;
    let report = IndexReport {
        sidecar,
        lines: idx.total_lines(),
        events: idx.total_events(),
        nodes: idx.prescan.nodes.len(),
    };
    match format {
        Format::Json => print_json(&report),
        Format::Text => println!(
            "indexed {} lines, {} events, {} nodes -> {}",
            report.lines,
            report.events,
            report.nodes,
            report.sidecar.display()
        ),
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidateReport {
    lines: u64,
    events: u64,
    skipped: u64,
    old_format: u64,
    errors: u64,
    protocols: Vec<String>,
    time_regressions: u64,
    diagnostics: Vec<(u64, String)>,
}

fn validate(trace: &Path, format: Format) -> Result<(), Failure> {
    let idx = build_indexes(trace, DEFAULT_BUFFER_SIZE)?;
    let p = &idx.prescan;
    let report = ValidateReport {
        lines: idx.total_lines(),
        events: idx.total_events(),
        skipped: p.skipped_lines,
        old_format: p.old_format_lines,
        errors: p.event_errors,
        protocols: p.protocols.clone(),
        time_regressions: p.time_regressions,
        diagnostics: p.diagnostics.clone(),
    };
    match format {
        Format::Json => print_json(&report),
        Format::Text => {
            println!(
                "{} lines, {} events, {} skipped ({} old-format), {} errors",
                report.lines, report.events, report.skipped, report.old_format, report.errors
            );
            if !report.protocols.is_empty() {
                println!("routing protocols: {}", report.protocols.join(", "));
            }
            if report.time_regressions > 0 {
                println!("warning: time goes backwards {} times", report.time_regressions);
            }
            for (line, why) in &report.diagnostics {
                println!("line {}: {why}", line + 1);
            }
        }
    }
    if report.errors > 0 {
        return Err(Failure::contract(format!("{} malformed event lines", report.errors)));
    }
    Ok(())
}
