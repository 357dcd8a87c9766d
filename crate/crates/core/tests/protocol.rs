mod common;

use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use goldilocks::harness::{run_with_source, ExperimentConfig, RemoteTeacher, RunContext};
use goldilocks::protocol::{serve, Client, Frame, MessageType, ServerConfig, ServerHandle, DEFAULT_TIMEOUT};
use goldilocks::Error;

fn start(cfg: &ExperimentConfig, clients: usize) -> (RunContext, ServerHandle) {
    let ctx = RunContext::new(cfg).unwrap();
    let handle = serve(ctx.teacher_service().unwrap(), "127.0.0.1:0", ServerConfig { expected_clients: clients }).unwrap();
    (ctx, handle)
}

fn connect(h: &ServerHandle) -> Client {
    Client::connect(h.local_addr(), DEFAULT_TIMEOUT).unwrap()
}

#[test]
fn sample_comes_from_the_dataset() {
    let cfg = common::tiny_config();
    let (ctx, h) = start(&cfg, 1);
    let mut c = connect(&h);
    let reply = c.request_sample().unwrap();
    let q = ctx.training.iter().find(|q| q.id == reply.question.id).unwrap();
    assert_eq!(&reply.question, q);
    assert!(reply.stats.mu > 0.0 && reply.stats.mu < 0.5);
    assert_eq!(reply.stats.model_version, 0);
    c.shutdown().unwrap();
    h.wait().unwrap();
}

#[test]
fn one_cycle_moves_each_counter_by_one() {
    let cfg = common::tiny_config();
    let (_, h) = start(&cfg, 1);
    let mut c = connect(&h);
    let q = c.request_sample().unwrap().question;
    let counters = c.send_feedback(q.id, &[1, 0, 0, 1]).unwrap();
    assert_eq!((counters.samples_served, counters.feedback_received), (1, 1));
    c.shutdown().unwrap();
    let summary = h.wait().unwrap();
    assert_eq!(summary.sessions[0].samples_served, 1);
    assert_eq!(summary.sessions[0].feedback_received, 1);
    assert!(summary.pending().is_empty());
}

#[test]
fn bad_feedback_is_rejected_without_touching_counters() {
    let cfg = common::tiny_config();
    let (_, h) = start(&cfg, 1);
    let mut c = connect(&h);
    let q = c.request_sample().unwrap().question;

    let err = c.send_feedback(q.id, &[1, 0, 1]).unwrap_err();
    assert!(matches!(&err, Error::Remote { code, .. } if code == "invalid-rewards"), "{err}");
    let err = c.send_feedback(q.id + 1_000, &[1, 0, 1, 1]).unwrap_err();
    assert!(matches!(&err, Error::Remote { code, .. } if code == "unknown-question"), "{err}");
    let err = c.send_feedback(q.id, &[1, 0, 2, 1]).unwrap_err();
    assert!(matches!(&err, Error::Remote { code, .. } if code == "invalid-rewards"), "{err}");

    let counters = c.send_feedback(q.id, &[1, 0, 1, 1]).unwrap();
    assert_eq!((counters.samples_served, counters.feedback_received), (1, 1));
    // the id is no longer pending
    let err = c.send_feedback(q.id, &[1, 0, 1, 1]).unwrap_err();
    assert!(matches!(&err, Error::Remote { code, .. } if code == "unknown-question"), "{err}");
    c.shutdown().unwrap();
    h.wait().unwrap();
}

#[test]
fn malformed_frames_get_an_error_and_the_connection_survives() {
    let cfg = common::tiny_config();
    let (_, h) = start(&cfg, 1);
    let mut c = connect(&h);
    for bad in ["{oops", "{\"v\":1,\"seq\":0,\"type\":\"feedback\"}", "{\"v\":9,\"seq\":0,\"type\":\"ack\"}"] {
        let reply = Frame::decode(&c.call_raw(bad).unwrap()).unwrap();
        assert_eq!(reply.kind, MessageType::Error);
        assert_eq!(reply.error.unwrap().code, "malformed-frame");
    }
    // sequence numbers must rise
    let first = Frame::decode(&c.call_raw(&Frame::request_sample(5).encode()).unwrap()).unwrap();
    assert_eq!(first.kind, MessageType::Sample);
    let again = Frame::decode(&c.call_raw(&Frame::request_sample(5).encode()).unwrap()).unwrap();
    assert_eq!(again.kind, MessageType::Error);
    let reply = Frame::decode(&c.call_raw(&Frame::shutdown(6).encode()).unwrap()).unwrap();
    assert_eq!(reply.kind, MessageType::Ack);
    let summary = h.wait().unwrap();
    // served but never fed back: still listed
    assert_eq!(summary.pending(), vec![(0, first.question_id.unwrap())]);
}

#[test]
fn server_loss_mid_cycle_surfaces_a_transport_error() {
    let cfg = common::tiny_config();
    let (ctx, h) = start(&cfg, 1);
    let mut c = connect(&h);
    let student = ctx.student().unwrap();
    let before = student.fingerprint();
    let reply = c.request_sample().unwrap();
    let rollout = student.rollout_group(&reply.question, cfg.group_size, 1, 0, &cfg.reward, cfg.seeds.student).unwrap();
    h.stop().unwrap();
    let err = c.send_feedback(reply.question.id, &rollout.group.rewards_ver).unwrap_err();
    assert!(err.is_retriable(), "{err}");
    assert_eq!(student.fingerprint(), before);
}

#[test]
fn unanswered_request_times_out_as_retriable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let mut c = Client::connect(listener.local_addr().unwrap(), Duration::from_millis(200)).unwrap();
    let err = c.request_sample().unwrap_err();
    assert!(matches!(err, Error::Transport(_)) && err.is_retriable(), "{err}");
}

#[test]
fn loopback_run_matches_in_process_row_for_row() {
    let mut cfg = ExperimentConfig::default().with_seed(4);
    cfg.total_steps = 200;
    let reference = common::in_process(&cfg);
    let (remote, _, summary) = common::loopback(&cfg);
    assert_eq!(reference, remote);
    assert_eq!(summary.teacher.feedback_count(), 200);
    // each reply carries the version of the model that selected it; the pass
    // triggered by feedback n completes before request n + 1 is served
    for r in &remote {
        assert_eq!(r.teacher_version, Some((r.step - 1) / cfg.teacher.update_every as u64));
    }
}

#[test]
fn two_clients_share_one_teacher() {
    let mut cfg = common::tiny_config();
    cfg.total_steps = 20;
    let (ctx, h) = start(&cfg, 2);
    let ctx = Arc::new(ctx);
    let addr = h.local_addr();
    let workers: Vec<_> = (0..2)
        .map(|_| {
            let ctx = Arc::clone(&ctx);
            thread::spawn(move || {
                let mut src = RemoteTeacher::new(Client::connect(addr, DEFAULT_TIMEOUT).unwrap());
                let mut student = ctx.student().unwrap();
                let rows = run_with_source(&ctx, &mut student, &mut src, None).unwrap();
                src.client.shutdown().unwrap();
                rows.len()
            })
        })
        .collect();
    for w in workers {
        assert_eq!(w.join().unwrap(), 20);
    }
    let summary = h.wait().unwrap();
    assert_eq!(summary.sessions.len(), 2);
    assert!(summary.sessions.iter().all(|s| s.samples_served == 20 && s.feedback_received == 20));
    assert_eq!(summary.teacher.feedback_count(), 40);
    assert_eq!(summary.teacher.version(), 40 / cfg.teacher.update_every as u64);
}

#[test]
fn transcript_matches_golden_file() {
    let (_, transcript, _) = common::loopback(&common::tiny_config());
    let golden = std::fs::read_to_string(common::GOLDEN_TRANSCRIPT).unwrap();
    assert_eq!(golden.lines().collect::<Vec<_>>(), transcript);
    // every line is a valid frame
    for line in &transcript {
        Frame::decode(&line[2..]).unwrap();
    }
}
