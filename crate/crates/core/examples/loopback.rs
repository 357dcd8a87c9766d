//! Teacher behind a TCP server, student in a client on the same machine.
//! Prints the wire transcript of the first few cycles.

use goldilocks::harness::{ExperimentConfig, RunContext};
use goldilocks::protocol::{client_step, serve, Client, ServerConfig, DEFAULT_TIMEOUT};

fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.group_size = 4;
    let ctx = RunContext::new(&cfg)?;
    let server = serve(ctx.teacher_service()?, "127.0.0.1:0", ServerConfig::default())?;
    println!("server on {}", server.local_addr());

    let mut client = Client::connect(server.local_addr(), DEFAULT_TIMEOUT)?;
    client.record_transcript();
    let student = ctx.student()?;
    for step in 1..=5 {
        let (reply, rollout) = client_step(&mut client, &student, &cfg.reward, cfg.group_size, step, cfg.seeds.student)?;
        println!(
            "step {step}: question {} (mu {:.3}, sigma {:.3}), rewards {:?}",
            reply.question.id, reply.stats.mu, reply.stats.sigma, rollout.group.rewards_ver
        );
    }
    client.shutdown()?;
    let summary = server.wait()?;
    println!("teacher received {} feedback records, model version {}", summary.teacher.feedback_count(), summary.teacher.version());
    println!("--- transcript ---");
    for line in client.transcript() {
        println!("{line}");
    }
    Ok(())
}
