//! The `tdm` command line.
//!
//! Exit codes: 0 when nothing was found, 1 when the command reports findings
//! (axiom violations, flow violations, unreachable pairs, failed requests, a
//! broken audit chain), 2 when the invocation or its inputs are unusable.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tdm_core::audit::{verify_persisted, CentralAuditStore};
use tdm_core::axioms::{validate, ValidationReport};
use tdm_core::decisions::{parse_request_script, DecisionLog, Enforcement, Request, Runtime};
use tdm_core::dsl::{self, serialize, Severity};
use tdm_core::flow::{
    build_flow_graph, check_flow_log, derive_trust_domains, parse_flow_log, reachable,
    FlowViolationKind,
};
use tdm_core::model::{build_model, ControlKind, TrustDomainModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tdm", version, about = "Analyse trust-domain models")]
pub struct Cli {
    /// Output format; `structured` prints one JSON record per line.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model against the axiom catalog.
    Validate {
        file: PathBuf,
        /// Also simulate this request script and check the resulting logs.
        #[arg(long)]
        requests: Option<PathBuf>,
        #[command(flatten)]
        controls: ControlArgs,
    },
    /// List the trust domains induced by flow agreements.
    Domains { file: PathBuf },
    /// Shortest flow path between two data stores.
    Reach {
        file: PathBuf,
        src: String,
        dst: String,
    },
    /// Check observed transfers against the agreed flows.
    Checkflow { file: PathBuf, log: PathBuf },
    /// Run a request script through the decision pipeline.
    Simulate {
        file: PathBuf,
        requests: PathBuf,
        /// Write the central audit store here.
        #[arg(long)]
        audit_out: Option<PathBuf>,
        #[command(flatten)]
        controls: ControlArgs,
    },
    /// Audit store utilities.
    Audit {
        #[command(subcommand)]
        action: AuditCommand,
    },
    /// Print the model in canonical form.
    Fmt { file: PathBuf },
    /// Print the flow graph in Graphviz dot syntax.
    Graph { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Verify the hash chain of a persisted store.
    Verify { path: PathBuf },
}

/// Controls used by the pipeline; each defaults to the first of its kind by id.
#[derive(Debug, Clone, Default, Args)]
pub struct ControlArgs {
    #[arg(long)]
    pub pdp: Option<String>,
    #[arg(long)]
    pub pep: Option<String>,
    #[arg(long)]
    pub audit_agent: Option<String>,
}

/// A failure that ends the command with [`EXIT_USAGE`].
#[derive(Debug)]
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

struct Ctx<'a> {
    format: Format,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn text(&self) -> bool {
        self.format == Format::Text
    }

    fn record(&mut self, value: serde_json::Value) -> Result<(), Fatal> {
        writeln!(self.out, "{value}")?;
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let mut ctx = Ctx {
        format: cli.format,
        out,
        err,
    };
    match dispatch(&mut ctx, cli.command) {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            let _ = writeln!(ctx.err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn dispatch(ctx: &mut Ctx, command: Command) -> Result<i32, Fatal> {
    match command {
        Command::Validate {
            file,
            requests,
            controls,
        } => cmd_validate(ctx, &file, requests.as_deref(), &controls),
        Command::Domains { file } => cmd_domains(ctx, &file),
        Command::Reach { file, src, dst } => cmd_reach(ctx, &file, &src, &dst),
        Command::Checkflow { file, log } => cmd_checkflow(ctx, &file, &log),
        Command::Simulate {
            file,
            requests,
            audit_out,
            controls,
        } => cmd_simulate(ctx, &file, &requests, audit_out.as_deref(), &controls),
        Command::Audit {
            action: AuditCommand::Verify { path },
        } => cmd_verify(ctx, &path),
        Command::Fmt { file } => {
            let model = load_model(ctx, &file)?;
            write!(ctx.out, "{}", serialize(&model))?;
            Ok(EXIT_OK)
        }
        Command::Graph { file } => {
            let model = load_model(ctx, &file)?;
            write!(ctx.out, "{}", build_flow_graph(&model).to_dot())?;
            Ok(EXIT_OK)
        }
    }
}

fn read(path: &Path) -> Result<String, Fatal> {
    fs::read_to_string(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

/// Parses and builds a model, printing diagnostics to stderr.
fn load_model(ctx: &mut Ctx, path: &Path) -> Result<TrustDomainModel, Fatal> {
    let text = read(path)?;
    let (decls, diags) = dsl::parse(&text);
    for d in &diags {
        writeln!(ctx.err, "{}:{d}", path.display())?;
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(Fatal(format!("{}: model has errors", path.display())));
    }
    build_model(&decls).map_err(|_| Fatal(format!("{}: model has errors", path.display())))
}

fn pick_control(
    model: &TrustDomainModel,
    given: Option<&str>,
    kind: ControlKind,
) -> Result<String, Fatal> {
    match given {
        Some(id) => Ok(id.to_string()),
        None => model
            .controls
            .values()
            .find(|c| c.kind == kind)
            .map(|c| c.id.clone())
            .ok_or_else(|| {
                Fatal(format!(
                    "the model declares no `{}` control",
                    kind.keyword()
                ))
            }),
    }
}

struct Simulation {
    runtime: Runtime,
    /// Request with the pipeline's error, in script order.
    failures: Vec<(usize, Request, String)>,
    steps: Vec<(usize, Option<String>)>,
}

fn simulate(
    model: TrustDomainModel,
    script: &[Request],
    controls: &ControlArgs,
) -> Result<Simulation, Fatal> {
    let pdp = pick_control(
        &model,
        controls.pdp.as_deref(),
        ControlKind::PolicyDecisionPoint,
    )?;
    let pep = pick_control(
        &model,
        controls.pep.as_deref(),
        ControlKind::PolicyEnforcementPoint,
    )?;
    let agent = pick_control(
        &model,
        controls.audit_agent.as_deref(),
        ControlKind::DomainAuditAgent,
    )?;
    let mut runtime = Runtime::new(model, &agent)?;
    let mut failures = Vec::new();
    let mut steps = Vec::new();
    for (i, req) in script.iter().enumerate() {
        match runtime.request(req.clone(), &pdp, &pep) {
            Ok(step) => steps.push((i, Some(step.decision.id))),
            Err(e) => {
                failures.push((i, req.clone(), e.to_string()));
                steps.push((i, None));
            }
        }
    }
    Ok(Simulation {
        runtime,
        failures,
        steps,
    })
}

fn cmd_validate(
    ctx: &mut Ctx,
    file: &Path,
    requests: Option<&Path>,
    controls: &ControlArgs,
) -> Result<i32, Fatal> {
    let model = load_model(ctx, file)?;
    let report = match requests {
        None => validate(&model, None, None),
        Some(path) => {
            let script = parse_request_script(&read(path)?)
                .map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
            let sim = simulate(model.clone(), &script, controls)?;
            let (_, log, store) = sim.runtime.into_parts();
            validate(&model, Some(&log), Some(&store))
        }
    };
    print_report(ctx, &report)?;
    Ok(if report.is_consistent() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn print_report(ctx: &mut Ctx, report: &ValidationReport) -> Result<(), Fatal> {
    if ctx.text() {
        for v in &report.violations {
            writeln!(
                ctx.out,
                "{} {} [{}]: {}\n    contradicts: \"{}\"",
                v.axiom_id,
                v.axiom_id.axiom().name,
                v.offending_element_ids.join(", "),
                v.explanation,
                v.citation()
            )?;
        }
        for n in &report.unchecked {
            writeln!(ctx.err, "warning: {} not checked: {}", n.axiom_id, n.reason)?;
        }
        writeln!(
            ctx.out,
            "model {}: {} axioms checked, {} violations",
            report.model_name,
            report.checked_axioms.len(),
            report.violations.len()
        )?;
    } else {
        for v in &report.violations {
            ctx.record(json!({
                "record": "violation",
                "axiom": v.axiom_id,
                "citation": v.citation(),
                "elements": v.offending_element_ids,
                "explanation": v.explanation,
            }))?;
        }
        for n in &report.unchecked {
            ctx.record(json!({ "record": "unchecked", "axiom": n.axiom_id, "reason": n.reason }))?;
        }
        ctx.record(json!({
            "record": "summary",
            "model": report.model_name,
            "checked": report.checked_axioms,
            "violations": report.violations.len(),
        }))?;
    }
    Ok(())
}

fn cmd_domains(ctx: &mut Ctx, file: &Path) -> Result<i32, Fatal> {
    let model = load_model(ctx, file)?;
    for d in derive_trust_domains(&model) {
        if ctx.text() {
            writeln!(ctx.out, "{} ({:?})", d.name, d.direction_profile)?;
            writeln!(ctx.out, "    policies: {}", join(&d.generating_policy_ids))?;
            writeln!(ctx.out, "    stores: {}", join(&d.member_store_ids))?;
            writeln!(ctx.out, "    entities: {}", join(&d.member_entity_ids))?;
        } else {
            ctx.record(json!({
                "record": "domain",
                "name": d.name,
                "direction": d.direction_profile,
                "policies": d.generating_policy_ids,
                "stores": d.member_store_ids,
                "owners": d.owner_role_ids,
                "entities": d.member_entity_ids,
            }))?;
        }
    }
    Ok(EXIT_OK)
}

fn join<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    items
        .into_iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_reach(ctx: &mut Ctx, file: &Path, src: &str, dst: &str) -> Result<i32, Fatal> {
    let model = load_model(ctx, file)?;
    let path = reachable(&build_flow_graph(&model), src, dst)?;
    if ctx.text() {
        match &path {
            Some(p) => writeln!(ctx.out, "{} (length {})", p.join(" -> "), p.len() - 1)?,
            None => writeln!(ctx.out, "unreachable")?,
        }
    } else {
        ctx.record(json!({
            "record": "reach",
            "source": src,
            "dest": dst,
            "path": path,
            "length": path.as_ref().map(|p| p.len() - 1),
        }))?;
    }
    Ok(if path.is_some() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn cmd_checkflow(ctx: &mut Ctx, file: &Path, log: &Path) -> Result<i32, Fatal> {
    let model = load_model(ctx, file)?;
    let events =
        parse_flow_log(&read(log)?).map_err(|e| Fatal(format!("{}: {e}", log.display())))?;
    let violations = check_flow_log(&model, &events);
    for v in &violations {
        let ev = &v.event;
        if ctx.text() {
            let mut line = format!("seq {}: {} -> {}: ", ev.seq, ev.source, ev.dest);
            match v.kind {
                FlowViolationKind::UnknownEndpoint => {
                    line.push_str("endpoint is not a data store of the model")
                }
                FlowViolationKind::NoAgreement => {
                    line.push_str("no direct flow agreement");
                    if !v.reverse_policy_ids.is_empty() {
                        line.push_str(&format!(
                            "; only the reverse direction is agreed by {} ({})",
                            join(&v.reverse_policy_ids),
                            join(&v.reverse_domains)
                        ));
                    }
                    if let Some(p) = &v.transitive_path {
                        line.push_str(&format!("; transitive route {}", p.join(" -> ")));
                    }
                }
            }
            writeln!(ctx.out, "{line}")?;
        } else {
            ctx.record(json!({
                "record": "flow-violation",
                "seq": ev.seq,
                "source": ev.source,
                "dest": ev.dest,
                "kind": v.kind,
                "reverse_policies": v.reverse_policy_ids,
                "reverse_domains": v.reverse_domains,
                "transitive_path": v.transitive_path,
            }))?;
        }
    }
    if ctx.text() {
        writeln!(
            ctx.out,
            "{} violations in {} events",
            violations.len(),
            events.len()
        )?;
    } else {
        ctx.record(
            json!({ "record": "summary", "events": events.len(), "violations": violations.len() }),
        )?;
    }
    Ok(if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn cmd_simulate(
    ctx: &mut Ctx,
    file: &Path,
    requests: &Path,
    audit_out: Option<&Path>,
    controls: &ControlArgs,
) -> Result<i32, Fatal> {
    let model = load_model(ctx, file)?;
    let script = parse_request_script(&read(requests)?)
        .map_err(|e| Fatal(format!("{}: {e}", requests.display())))?;
    let sim = simulate(model, &script, controls)?;
    let log = sim.runtime.log();
    for (i, decision_id) in &sim.steps {
        let req = &script[*i];
        match decision_id {
            Some(id) => print_decision(ctx, log, id)?,
            None => {
                let (_, _, msg) = sim
                    .failures
                    .iter()
                    .find(|(j, _, _)| j == i)
                    .expect("failure recorded");
                if ctx.text() {
                    writeln!(
                        ctx.out,
                        "error {} {} {}: {msg}",
                        req.requester_entity_id, req.action_kind, req.target_asset_id
                    )?;
                } else {
                    ctx.record(json!({
                        "record": "error",
                        "request": { "requester": req.requester_entity_id, "action": req.action_kind, "target": req.target_asset_id },
                        "message": msg,
                    }))?;
                }
            }
        }
    }
    let store = sim.runtime.store();
    if let Some(path) = audit_out {
        fs::write(path, store.save()).map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
    }
    if ctx.text() {
        writeln!(
            ctx.out,
            "{} decisions, {} actions, {} audit events, {} errors",
            log.decisions.len(),
            log.actions.len(),
            store.len(),
            sim.failures.len()
        )?;
    } else {
        ctx.record(json!({
            "record": "summary",
            "decisions": log.decisions.len(),
            "actions": log.actions.len(),
            "audit_events": store.len(),
            "errors": sim.failures.len(),
            "head_hash": store.head_hash(),
        }))?;
    }
    Ok(if sim.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn print_decision(ctx: &mut Ctx, log: &DecisionLog, id: &str) -> Result<(), Fatal> {
    let d = log.decision(id).expect("logged decision");
    let action = log.actions.iter().find(|a| a.decision_id == d.id);
    let outcome = match action {
        Some(a) => Enforcement::Performed(a.clone()),
        None => Enforcement::Blocked {
            decision_id: d.id.clone(),
        },
    };
    let req = &d.request;
    if ctx.text() {
        let tail = match &outcome {
            Enforcement::Performed(a) => format!("performed as {}", a.id),
            Enforcement::Blocked { .. } => "blocked".to_string(),
        };
        writeln!(
            ctx.out,
            "{} {} {} {} {} [{}] {tail}",
            d.id,
            d.kind.as_str(),
            req.requester_entity_id,
            req.action_kind,
            req.target_asset_id,
            join(&d.influenced_policy_ids)
        )?;
    } else {
        let mut rec = log
            .export_records()
            .into_iter()
            .find(|r| r["decision"] == d.id.as_str())
            .expect("exported");
        rec["record"] = json!("decision");
        rec["action"] = json!(action.map(|a| &a.id));
        ctx.record(rec)?;
    }
    Ok(())
}

fn cmd_verify(ctx: &mut Ctx, path: &Path) -> Result<i32, Fatal> {
    let bytes = fs::read(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
    let result = verify_persisted(&bytes);
    let events = CentralAuditStore::load(&String::from_utf8_lossy(&bytes))
        .map(|s| s.len())
        .ok();
    if ctx.text() {
        match (result.ok, result.first_bad_index) {
            (true, _) => writeln!(ctx.out, "chain ok: {} events", events.unwrap_or(0))?,
            (false, Some(i)) => writeln!(ctx.out, "chain broken: first bad event index {i}")?,
            (false, None) => writeln!(ctx.out, "chain broken: store header is damaged")?,
        }
    } else {
        ctx.record(json!({
            "record": "verification",
            "ok": result.ok,
            "first_bad_index": result.first_bad_index,
            "events": events,
        }))?;
    }
    Ok(if result.ok { EXIT_OK } else { EXIT_FINDINGS })
}
