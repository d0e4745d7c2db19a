use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use factdebate::claims::claim_id;
use factdebate::debate::run_debate_with_retries;
use factdebate::eval::{
    load_dataset, run_benchmark, sample_balanced, write_archive, BenchmarkReport, DatasetFormat, MetricsReport,
};
use factdebate::evidence::{SearchDescriptor, SearchKind, SearchProvider};
use factdebate::gateway::{ResponseCache, TokenBucket};
use factdebate::model::{write_document, EvidenceSource};
use factdebate::personas::TEMPLATE_VERSION;
use factdebate::{
    aggregate_response_verdict, extract_claims, Claim, EvidenceSnippet, Gateway, ResponseOutcome, ResponseSample,
    TaskKind, Verifier,
};
use serde_json::json;
use tracing::info;

use crate::config::{RunConfig, SearchChoice};
use crate::Command;

const FACTUAL: u8 = 0;
const HALLUCINATED: u8 = 1;

pub fn run(cfg: &RunConfig, command: Command) -> Result<ExitCode> {
    let gateway = build_gateway(cfg)?;
    let search = build_search(cfg)?;
    let mut verifier = Verifier::new(&gateway, cfg.debate)
        .with_opinion_retries(cfg.opinion_retries)
        .with_parallel(cfg.parallel);
    if let Some(search) = search.as_deref() {
        verifier = verifier.with_search(search);
    }
    let code = match command {
        Command::Verify { input, out } => verify(&verifier, &input, out.as_deref()),
        Command::Evaluate {
            dataset,
            format,
            n,
            p,
            out,
        } => evaluate(cfg, &verifier, &dataset, &format, n, p, out.as_deref()),
        Command::Debate { claim, evidence, out } => debate(cfg, &verifier, &claim, evidence.as_deref(), out.as_deref()),
        Command::Detect { input } => detect(&gateway, &input),
        Command::Retrieve { claim, knowledge } => retrieve(&verifier, &claim, knowledge.as_deref()),
    }?;
    info!(provider_calls = gateway.provider_calls(), "done");
    Ok(ExitCode::from(code))
}

fn build_gateway(cfg: &RunConfig) -> Result<Gateway> {
    let mut gateway = Gateway::from_descriptor(&cfg.backend)?
        .with_params(cfg.model.clone())
        .with_budget(cfg.call_budget);
    if let Some(rpm) = cfg.rate_limit_rpm {
        gateway = gateway.with_rate_limit(TokenBucket::per_minute(rpm));
    }
    if let Some(dir) = &cfg.cache_dir {
        gateway = gateway.with_cache(ResponseCache::open(dir)?);
    }
    Ok(gateway)
}

fn build_search(cfg: &RunConfig) -> Result<Option<Box<dyn SearchProvider>>> {
    let kind = match cfg.search {
        SearchChoice::None => return Ok(None),
        SearchChoice::Fixture => SearchKind::Fixture,
        SearchChoice::Web => SearchKind::WebApi,
    };
    let config = cfg
        .search_config
        .iter()
        .map(|(k, v)| (k.trim_start_matches("search_").replace("fixtures", "dir"), v.clone()))
        .collect();
    Ok(Some(SearchDescriptor { kind, config }.build()?))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_sample(path: &Path) -> Result<ResponseSample> {
    serde_json::from_str(&read(path)?).with_context(|| format!("{} is not a response sample", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn verdict_code(factual: bool) -> u8 {
    if factual {
        FACTUAL
    } else {
        HALLUCINATED
    }
}

fn verify(verifier: &Verifier<'_>, input: &Path, out: Option<&Path>) -> Result<u8> {
    let sample = read_sample(input)?;
    let outcome = verifier.verify_response(&sample)?;
    for skipped in outcome.unverifiable() {
        eprintln!("unverifiable claim {}: {}", skipped.claim_id, skipped.reason);
    }
    match outcome {
        ResponseOutcome::Verified { verdict, .. } => {
            emit(&write_document(&verdict, TEMPLATE_VERSION), out)?;
            Ok(verdict_code(verdict.factual))
        }
        ResponseOutcome::NoVerifiableContent { response_id } => {
            eprintln!("{response_id}: no verifiable content");
            Ok(FACTUAL)
        }
        ResponseOutcome::AllUnverifiable { response_id, .. } => {
            bail!("{response_id}: no claim could be verified")
        }
    }
}

fn percent(value: f64) -> String {
    format!("{:6.2}", value * 100.0)
}

fn metrics_line(label: &str, m: &MetricsReport) -> String {
    format!(
        "{label:<9} {} {} {} {}  n={}\n",
        percent(m.accuracy),
        percent(m.recall),
        percent(m.precision),
        percent(m.f1),
        m.total()
    )
}

fn evaluate(
    cfg: &RunConfig,
    verifier: &Verifier<'_>,
    dataset: &Path,
    format: &str,
    n: Option<usize>,
    p: f64,
    out: Option<&Path>,
) -> Result<u8> {
    let format: DatasetFormat = format.parse().map_err(anyhow::Error::msg)?;
    let mut samples = load_dataset(dataset, format)?;
    if let Some(n) = n {
        samples = sample_balanced(&samples, n, p, cfg.seed)?;
    }
    let run = run_benchmark(&samples, verifier, cfg.parallel)?;
    let config = json!({
        "dataset": dataset.display().to_string(),
        "format": format.as_str(),
        "n": n,
        "p": p,
        "seed": cfg.seed,
        "backend": cfg.backend.kind,
        "model": cfg.model.model_id,
        "temperature": cfg.model.temperature,
        "max_tokens": cfg.model.max_tokens,
        "policy": cfg.debate.policy.as_str(),
        "min_rounds": cfg.debate.min_rounds,
        "max_rounds": cfg.debate.max_rounds,
        "evidence_k": cfg.debate.evidence_k,
        "opinion_retries": cfg.opinion_retries,
        "search": cfg.search,
    });
    let report = BenchmarkReport::new(config, &run);

    let mut table = format!("{:<9} {:>6} {:>6} {:>6} {:>6}\n", "level", "acc", "rec", "prec", "f1");
    match &report.claim_level {
        Some(m) => table.push_str(&metrics_line("claim", m)),
        None => table.push_str("claim     skipped (no gold claim labels)\n"),
    }
    match &report.response_level {
        Some(m) => table.push_str(&metrics_line("response", m)),
        None => table.push_str("response  no verified responses\n"),
    }
    table.push_str(&format!(
        "responses={} no_verifiable_content={} all_unverifiable={} detection_failures={}\n",
        report.responses, report.no_verifiable_content, report.all_unverifiable, report.detection_failures
    ));
    print!("{table}");
    if let Some(dir) = out {
        write_archive(dir, &report, &run)?;
    }
    Ok(FACTUAL)
}

fn debate(
    cfg: &RunConfig,
    verifier: &Verifier<'_>,
    text: &str,
    evidence: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8> {
    let snippets: Vec<String> = match evidence {
        Some(path) => serde_json::from_str(&read(path)?)
            .with_context(|| format!("{} must be a JSON array of strings", path.display()))?,
        None => Vec::new(),
    };
    let evidence: Vec<EvidenceSnippet> = snippets
        .into_iter()
        .take(cfg.debate.evidence_k)
        .enumerate()
        .map(|(i, text)| EvidenceSnippet {
            text,
            source: EvidenceSource::WebSearch,
            rank: i as u32 + 1,
            origin_ref: None,
        })
        .collect();
    let response_id = "claim".into();
    let claim = Claim::new(claim_id(&response_id, 1), text, response_id, TaskKind::Qa, None)?;
    let claim_verdict =
        run_debate_with_retries(&claim, &evidence, &cfg.debate, verifier.gateway(), cfg.opinion_retries)?;
    let verdict = aggregate_response_verdict(vec![claim_verdict])?;
    emit(&write_document(&verdict, TEMPLATE_VERSION), out)?;
    Ok(verdict_code(verdict.factual))
}

fn detect(gateway: &Gateway, input: &Path) -> Result<u8> {
    let sample = read_sample(input)?;
    match extract_claims(&sample, gateway) {
        Ok(claims) => {
            let mut stdout = std::io::stdout().lock();
            for claim in claims {
                writeln!(stdout, "{}", serde_json::to_string(&claim)?)?;
            }
            Ok(FACTUAL)
        }
        Err(factdebate::claims::ClaimError::NoVerifiableContent) => {
            eprintln!("{}: no verifiable content", sample.response_id);
            Ok(FACTUAL)
        }
        Err(err) => Err(err.into()),
    }
}

fn retrieve(verifier: &Verifier<'_>, text: &str, knowledge: Option<&Path>) -> Result<u8> {
    let knowledge = knowledge.map(read).transpose()?;
    let response_id = "claim".into();
    let claim = Claim::new(claim_id(&response_id, 1), text, response_id, TaskKind::Qa, None)?;
    let snippets = verifier.collect_evidence(&claim, knowledge.as_deref())?;
    let mut stdout = std::io::stdout().lock();
    for snippet in snippets {
        writeln!(stdout, "{}", serde_json::to_string(&snippet)?)?;
    }
    Ok(FACTUAL)
}
