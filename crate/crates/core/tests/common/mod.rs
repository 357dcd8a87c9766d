#![allow(dead_code)]

use goldilocks::harness::{run_with_source, ExperimentConfig, InProcessTeacher, MetricsRecord, RemoteTeacher, RunContext};
use goldilocks::protocol::{serve, Client, ServerConfig, ServerSummary, DEFAULT_TIMEOUT};

/// A small scenario that keeps the wire transcript short.
pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_file(std::path::Path::new(GOLDEN_CONFIG), &[]).unwrap()
}

pub fn in_process(cfg: &ExperimentConfig) -> Vec<MetricsRecord> {
    let ctx = RunContext::new(cfg).unwrap();
    let mut student = ctx.student().unwrap();
    let mut src = InProcessTeacher::new(ctx.teacher_service().unwrap());
    run_with_source(&ctx, &mut student, &mut src, None).unwrap()
}

/// Same run with the teacher behind a loopback server.
pub fn loopback(cfg: &ExperimentConfig) -> (Vec<MetricsRecord>, Vec<String>, ServerSummary) {
    let ctx = RunContext::new(cfg).unwrap();
    let handle = serve(ctx.teacher_service().unwrap(), "127.0.0.1:0", ServerConfig::default()).unwrap();
    let mut client = Client::connect(handle.local_addr(), DEFAULT_TIMEOUT).unwrap();
    client.record_transcript();
    let mut student = ctx.student().unwrap();
    let mut src = RemoteTeacher::new(client);
    let records = run_with_source(&ctx, &mut student, &mut src, None).unwrap();
    src.client.shutdown().unwrap();
    let transcript = src.client.transcript().to_vec();
    (records, transcript, handle.wait().unwrap())
}

pub fn csv_bytes(records: &[MetricsRecord]) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    goldilocks::harness::write_csv(&p, records).unwrap();
    std::fs::read(p).unwrap()
}

pub const GOLDEN_TRANSCRIPT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_transcript.ndjson");
pub const GOLDEN_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden.toml");
