use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use revkit::analysis::{export_sankey, transitions, transitions_by_group};
use revkit::annotation::{render_annotated, AnnotatedText, IntentSpan};
use revkit::backends::{load_rule_table, Detector, RemoteBackend, Reviser, RuleDetector, RuleReviser};
use revkit::corpus::{build_record, parse_raw_line, CorpusRecord, CorpusStats, FilterReport, Ingested, SourceDataset};
use revkit::engine::{detect_spans, Pipeline, RoundOutcome};
use revkit::metrics::{corpus_rouge_l, corpus_sari, token_f1, BleuStats, ScoreLine};
use revkit::model::{Document, EngineConfig, Intent};
use revkit::{RevisionStep, RevisionTrace};

use crate::args::*;
use crate::io::{open_input, open_output, parse_json_line, process_ordered, read_lines, write_json_line, DocLine};

/// Bad flag combinations that clap cannot express; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Filter(a) => filter(a),
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Detect(a) => detect(a),
        Command::Revise(a) => revise(a),
        Command::Iterate(a) => iterate(a),
        Command::Eval(a) => eval(a),
        Command::Flows(a) => flows(a),
    }
}

fn filter(a: FilterArgs) -> Result<()> {
    let cfg = a.filter.config();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = SourceDataset::from(a.dataset);
    let mut discarded = a.discarded.as_deref().map(|p| open_output(Some(p))).transpose()?;
    let mut report = FilterReport::default();
    process_ordered(
        open_input(Some(&a.input))?,
        1,
        |n, line| Ok(parse_raw_line(dataset, n, line)?),
        |raw| Ok(build_record(dataset, revkit::corpus::Split::Train, raw, &cfg)?),
        |outcome| {
            report.record(&outcome);
            if let (Some(out), Ingested::Discarded { line, reason }) = (discarded.as_mut(), &outcome) {
                write_json_line(out.as_mut(), &json!({ "line": line, "discard": reason }))?;
            }
            Ok(())
        },
    )?;
    if let Some(mut out) = discarded {
        out.flush()?;
    }
    let fraction = report.filtered_fraction();
    let mut out = open_output(None)?;
    write_json_line(
        out.as_mut(),
        &json!({
            "dataset": dataset,
            "total": report.total,
            "kept": report.kept,
            "len_ratio": report.len_ratio,
            "char_similarity": report.char_similarity,
            "out_of_taxonomy": report.out_of_taxonomy,
            "filtered_fraction": fraction,
        }),
    )?;
    out.flush()?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let cfg = a.filter.config();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = SourceDataset::from(a.dataset);
    let split = a.split.into();
    let mut out = open_output(a.out.as_deref())?;
    let mut report = FilterReport::default();
    process_ordered(
        open_input(Some(&a.input))?,
        1,
        |n, line| Ok(parse_raw_line(dataset, n, line)?),
        |raw| Ok(build_record(dataset, split, raw, &cfg)?),
        |outcome| {
            report.record(&outcome);
            if let Ingested::Record(r) = &outcome {
                write_json_line(out.as_mut(), r)?;
            }
            Ok(())
        },
    )?;
    out.flush()?;
    eprintln!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let mut stats = CorpusStats::default();
    for path in &a.inputs {
        process_ordered(
            open_input(Some(path))?,
            1,
            |n, line| parse_json_line::<CorpusRecord>(n, line).with_context(|| path.display().to_string()),
            Ok,
            |r| {
                stats.add(&r);
                Ok(())
            },
        )?;
    }
    let mut out = open_output(None)?;
    match a.format {
        StatsFormat::Table => out.write_all(stats.report().as_bytes())?,
        StatsFormat::Json => write_json_line(out.as_mut(), &stats)?,
    }
    out.flush()?;
    Ok(())
}

type DynPipeline = Pipeline<Box<dyn Detector>, Box<dyn Reviser>>;

fn backends(flags: &BackendFlags) -> Result<(Box<dyn Detector>, Box<dyn Reviser>)> {
    match flags.backend {
        BackendKind::Rules => {
            let path = flags.rules.as_deref().ok_or_else(|| usage("--rules is required"))?;
            let table = load_rule_table(path).with_context(|| format!("rule table {}", path.display()))?;
            Ok((Box::new(RuleDetector::new(&table)), Box::new(RuleReviser::new(&table))))
        }
        BackendKind::Remote => {
            let endpoint = flags.endpoint.as_deref().ok_or_else(|| usage("--endpoint is required"))?;
            let remote = RemoteBackend::with_timeout(endpoint, Duration::from_secs(flags.timeout));
            remote.health()?;
            Ok((Box::new(remote.clone()), Box::new(remote)))
        }
    }
}

fn pipeline(backend: &BackendFlags, engine: &EngineFlags) -> Result<DynPipeline> {
    let config: EngineConfig = engine.config();
    config.validate().map_err(|e| usage(e.to_string()))?;
    let (detector, reviser) = backends(backend)?;
    Ok(Pipeline::new(detector, reviser, config))
}

fn parse_doc(n: usize, line: &str) -> Result<Option<(usize, DocLine)>> {
    Ok(parse_json_line::<DocLine>(n, line)?.map(|d| (n, d)))
}

#[derive(Serialize)]
struct Detection<'a> {
    doc_id: &'a str,
    annotated: String,
    labels: Vec<Intent>,
    spans: Vec<IntentSpan>,
}

fn detect(a: DetectArgs) -> Result<()> {
    let p = pipeline(&a.backend, &a.engine)?;
    let mut out = open_output(a.out.as_deref())?;
    process_ordered(
        open_input(a.input.as_deref())?,
        a.parallel.jobs as usize,
        parse_doc,
        |(n, doc)| {
            let (labels, spans) =
                detect_spans(&p.detector, &doc.text, &p.config).with_context(|| format!("line {n}: {}", doc.doc_id))?;
            let annotated = render_annotated(&AnnotatedText::new(doc.text.clone(), spans.clone()))?;
            Ok(serde_json::to_value(Detection {
                doc_id: &doc.doc_id,
                annotated,
                labels,
                spans,
            })?)
        },
        |v| write_json_line(out.as_mut(), &v),
    )?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RoundLine {
    doc_id: String,
    text: String,
    step: Option<RevisionStep>,
}

fn revise(a: RunArgs) -> Result<()> {
    let p = pipeline(&a.backend, &a.engine)?;
    let mut out = open_output(a.out.as_deref())?;
    process_ordered(
        open_input(a.input.as_deref())?,
        a.parallel.jobs as usize,
        parse_doc,
        |(n, doc)| {
            let outcome = p
                .revise_once(&Document::new(doc.doc_id.clone(), doc.text.clone()))
                .with_context(|| format!("line {n}: {}", doc.doc_id))?;
            Ok(match outcome {
                RoundOutcome::NoSpans { .. } => RoundLine {
                    doc_id: doc.doc_id,
                    text: doc.text,
                    step: None,
                },
                RoundOutcome::Step(step) => RoundLine {
                    doc_id: doc.doc_id,
                    text: step.after.clone(),
                    step: Some(step),
                },
            })
        },
        |line| write_json_line(out.as_mut(), &line),
    )?;
    out.flush()?;
    Ok(())
}

fn iterate(a: RunArgs) -> Result<()> {
    let p = pipeline(&a.backend, &a.engine)?;
    let mut out = open_output(a.out.as_deref())?;
    process_ordered(
        open_input(a.input.as_deref())?,
        a.parallel.jobs as usize,
        parse_doc,
        |(n, doc)| {
            let document = Document::new(doc.doc_id.clone(), doc.text.clone());
            let trace = match (&doc.references, p.config.quality_guard) {
                (Some(refs), _) => p.iterate_with_references(&document, refs),
                (None, None) => p.iterate(&document),
                (None, Some(_)) => return Err(anyhow!("line {n}: {}: quality guard needs references", doc.doc_id)),
            };
            let mut trace: RevisionTrace = trace.with_context(|| format!("line {n}: {}", doc.doc_id))?;
            trace.group = doc.group;
            Ok(trace)
        },
        |trace| write_json_line(out.as_mut(), &trace),
    )?;
    out.flush()?;
    Ok(())
}

/// Gold or predicted labels: a JSON array or whitespace-separated names.
fn read_label_file(path: &std::path::Path) -> Result<Vec<Vec<Intent>>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let ctx = || format!("{} line {}", path.display(), i + 1);
            if line.trim_start().starts_with('[') {
                serde_json::from_str::<Vec<String>>(line)
                    .with_context(ctx)?
                    .iter()
                    .map(|s| s.parse::<Intent>().map_err(anyhow::Error::from))
                    .collect::<Result<Vec<_>>>()
                    .with_context(ctx)
            } else {
                line.split_whitespace()
                    .map(|s| s.parse::<Intent>().map_err(anyhow::Error::from))
                    .collect::<Result<Vec<_>>>()
                    .with_context(ctx)
            }
        })
        .collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    let wants = |m: MetricArg| a.metric == m || a.metric == MetricArg::All;
    let text_metric = wants(MetricArg::Bleu) || wants(MetricArg::RougeL) || wants(MetricArg::Sari);
    let have_text = a.hyp.is_some() && !a.refs.is_empty();
    let have_labels = a.gold.is_some() && a.pred.is_some();
    match a.metric {
        MetricArg::All if !have_text && !have_labels => {
            return Err(usage("eval needs --hyp and --ref, or --gold and --pred"))
        }
        MetricArg::Bleu | MetricArg::RougeL | MetricArg::Sari if !have_text => {
            return Err(usage("this metric needs --hyp and at least one --ref"))
        }
        MetricArg::Sari if a.src.is_none() => return Err(usage("sari needs --src")),
        MetricArg::TokenF1 if !have_labels => return Err(usage("token-f1 needs --gold and --pred")),
        _ => {}
    }

    let mut lines: Vec<ScoreLine> = Vec::new();
    if text_metric && have_text {
        let hyps = read_lines(a.hyp.as_deref().expect("checked above"))?;
        let ref_files = a.refs.iter().map(|p| read_lines(p)).collect::<Result<Vec<_>>>()?;
        for (p, r) in a.refs.iter().zip(&ref_files) {
            if r.len() != hyps.len() {
                bail!("{} has {} lines, hypotheses have {}", p.display(), r.len(), hyps.len());
            }
        }
        let refs: Vec<Vec<String>> = (0..hyps.len())
            .map(|i| ref_files.iter().map(|f| f[i].clone()).collect())
            .collect();
        if wants(MetricArg::Bleu) {
            let mut stats = BleuStats::default();
            for (h, r) in hyps.iter().zip(&refs) {
                stats.add(h, r);
            }
            lines.push(ScoreLine {
                metric: "bleu".into(),
                value: stats.score(),
                breakdown: Some(json!({
                    "matches": stats.matches,
                    "totals": stats.totals,
                    "hyp_len": stats.hyp_len,
                    "ref_len": stats.ref_len,
                    "brevity_penalty": stats.brevity_penalty(),
                })),
            });
        }
        if wants(MetricArg::RougeL) {
            let r = corpus_rouge_l(&hyps, &refs)?;
            lines.push(ScoreLine {
                metric: "rouge-l".into(),
                value: r.f,
                breakdown: Some(serde_json::to_value(r)?),
            });
        }
        if wants(MetricArg::Sari) {
            if let Some(src) = a.src.as_deref() {
                let srcs = read_lines(src)?;
                if srcs.len() != hyps.len() {
                    bail!("{} has {} lines, hypotheses have {}", src.display(), srcs.len(), hyps.len());
                }
                let s = corpus_sari(&srcs, &hyps, &refs)?;
                lines.push(ScoreLine {
                    metric: "sari".into(),
                    value: s.score,
                    breakdown: Some(serde_json::to_value(&s)?),
                });
            }
        }
    }
    if wants(MetricArg::TokenF1) && have_labels {
        let gold = read_label_file(a.gold.as_deref().expect("checked above"))?;
        let pred = read_label_file(a.pred.as_deref().expect("checked above"))?;
        let r = token_f1(&gold, &pred)?;
        lines.push(ScoreLine {
            metric: "token-f1".into(),
            value: r.overall.f1,
            breakdown: Some(serde_json::to_value(&r)?),
        });
    }
    let mut out = open_output(None)?;
    for l in &lines {
        write_json_line(out.as_mut(), l)?;
    }
    out.flush()?;
    Ok(())
}

fn flows(a: FlowsArgs) -> Result<()> {
    let mut traces: Vec<RevisionTrace> = Vec::new();
    process_ordered(
        open_input(Some(&a.input))?,
        1,
        parse_json_line::<RevisionTrace>,
        Ok,
        |t| {
            traces.push(t);
            Ok(())
        },
    )?;
    let mut out = open_output(a.out.as_deref())?;
    match (a.format, a.by_group) {
        (FlowFormat::Sankey, false) => {
            serde_json::to_writer_pretty(&mut out, &export_sankey(&transitions(&traces)))?;
            out.write_all(b"\n")?;
        }
        (FlowFormat::Sankey, true) => {
            let by: BTreeMap<String, _> = transitions_by_group(&traces)
                .iter()
                .map(|(g, m)| (g.clone(), export_sankey(m)))
                .collect();
            serde_json::to_writer_pretty(&mut out, &by)?;
            out.write_all(b"\n")?;
        }
        (FlowFormat::Csv, false) => out.write_all(transitions(&traces).to_csv().as_bytes())?,
        (FlowFormat::Csv, true) => {
            out.write_all(b"group,depth,from,to,count\n")?;
            for (group, m) in transitions_by_group(&traces) {
                for row in m.to_csv().lines().skip(1) {
                    writeln!(out, "{group},{row}")?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
