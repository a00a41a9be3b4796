use super::*;

/// Scripted program: sends whatever the script says for the current round and
/// records everything it receives.
#[derive(Default)]
struct Scripted {
    script: Vec<(u64, Vec<(usize, Message)>)>,
    broadcast_at: Vec<(u64, Message)>,
    received: Vec<(u64, usize, Message)>,
}

impl NodeProgram for Scripted {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        for (r, msgs) in &self.script {
            if *r == ctx.round {
                for &(to, m) in msgs {
                    ctx.send(to, m);
                }
            }
        }
        for &(r, m) in &self.broadcast_at {
            if r == ctx.round {
                ctx.broadcast(m);
            }
        }
    }

    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        for (s, m) in ctx.inbox.iter() {
            self.received.push((ctx.round, s, m));
        }
    }
}

fn data(a: u64) -> Message {
    Message::scalar(MessageKind::Data, a)
}

fn scripted(n_f: usize, n_c: usize) -> Network<Scripted, Scripted> {
    Network::new(n_f, n_c, 1, 1_000, |_| Scripted::default(), |_| Scripted::default())
}

#[test]
fn empty_round_only_advances_counter() {
    let mut net = scripted(2, 3);
    net.run_round().unwrap();
    assert_eq!(net.round(), 1);
    assert_eq!(net.messages_delivered(), 0);
    assert!(net.clients().all(|c| c.received.is_empty()));
}

#[test]
fn broadcast_reaches_every_client_in_one_round() {
    let mut net = scripted(2, 4);
    net.facility_mut(1).broadcast_at.push((1, data(9)));
    net.run_round().unwrap();
    for c in net.clients() {
        assert_eq!(c.received, vec![(1, 1, data(9))]);
    }
    assert_eq!(net.messages_delivered(), 4);
}

#[test]
fn second_message_on_an_edge_is_rejected() {
    let mut net = scripted(1, 2);
    net.facility_mut(0).script.push((1, vec![(1, data(1)), (0, data(2)), (1, data(3))]));
    let err = net.run_round().unwrap_err();
    assert_eq!(err, SimError::Bandwidth { round: 1, sender: NodeId::facility(0), receiver: NodeId::client(1) });
}

#[test]
fn opposite_directions_do_not_share_bandwidth() {
    let mut net = scripted(2, 2);
    net.facility_mut(0).script.push((1, vec![(1, data(1))]));
    net.client_mut(0).script.push((1, vec![(1, data(2))]));
    net.client_mut(1).script.push((1, vec![(0, data(3))]));
    net.run_round().unwrap();
    assert_eq!(net.facility(0).received, vec![(1, 1, data(3))]);
    assert_eq!(net.facility(1).received, vec![(1, 0, data(2))]);
}

#[test]
fn broadcast_conflicts_are_rejected() {
    let mut net = scripted(1, 2);
    net.facility_mut(0).broadcast_at.push((1, data(1)));
    net.facility_mut(0).script.push((1, vec![(0, data(2))]));
    assert!(matches!(net.run_round(), Err(SimError::BroadcastConflict { .. })));

    let mut net = scripted(1, 2);
    net.client_mut(1).broadcast_at.push((1, data(1)));
    net.client_mut(1).broadcast_at.push((1, data(2)));
    assert!(matches!(net.run_round(), Err(SimError::BroadcastConflict { .. })));
}

#[test]
fn bad_receiver_and_oversized_scalar_are_rejected() {
    let mut net = scripted(1, 2);
    net.facility_mut(0).script.push((1, vec![(2, data(1))]));
    assert!(matches!(net.run_round(), Err(SimError::NoSuchReceiver { receiver: 2, .. })));

    let mut net = scripted(1, 2);
    net.client_mut(0).script.push((1, vec![(0, data(1_001))]));
    assert!(matches!(net.run_round(), Err(SimError::ScalarTooLarge { value: 1_001, bound: 1_000, .. })));
}

#[test]
fn inbox_is_sorted_by_sender() {
    let mut net = scripted(4, 1);
    net.facility_mut(3).script.push((1, vec![(0, data(3))]));
    net.facility_mut(2).broadcast_at.push((1, data(2)));
    net.facility_mut(0).script.push((1, vec![(0, data(0))]));
    net.facility_mut(1).broadcast_at.push((1, data(1)));
    net.run_round().unwrap();
    let senders: Vec<usize> = net.client(0).received.iter().map(|r| r.1).collect();
    assert_eq!(senders, vec![0, 1, 2, 3]);
}

/// Facility 0 broadcasts a ping in its first round; every client acks once.
struct Pinger {
    pinged: bool,
    acks: usize,
}

struct Acker {
    owe_ack: bool,
    acked: bool,
}

impl NodeProgram for Pinger {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        if ctx.node.index == 0 && !self.pinged {
            ctx.broadcast(Message::signal(MessageKind::Data));
            self.pinged = true;
        }
    }
    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        self.acks += ctx.inbox.len();
    }
}

impl NodeProgram for Acker {
    fn send(&mut self, ctx: &mut SendCtx<'_>) {
        if self.owe_ack {
            ctx.send(0, Message::signal(MessageKind::Data));
            self.owe_ack = false;
            self.acked = true;
        }
    }
    fn receive(&mut self, ctx: &mut RecvCtx<'_>) {
        // A message is visible only after the round in which it was sent.
        if !ctx.inbox.is_empty() {
            self.owe_ack = true;
        }
    }
}

fn ping_network(n_c: usize) -> Network<Pinger, Acker> {
    Network::new(3, n_c, 5, 1, |_| Pinger { pinged: false, acks: 0 }, |_| Acker { owe_ack: false, acked: false })
}

#[test]
fn broadcast_and_ack_takes_two_rounds() {
    let mut net = ping_network(6);
    let outcome = net.run_until(|n| n.facility(0).acks == n.n_c(), 10).unwrap();
    assert_eq!(outcome, RunOutcome::Halted { rounds: 2 });
    assert!(net.clients().all(|c| c.acked));
}

#[test]
fn predicate_true_initially_runs_nothing() {
    let mut net = ping_network(2);
    assert_eq!(net.run_until(|_| true, 3).unwrap(), RunOutcome::Halted { rounds: 0 });
    assert_eq!(net.round(), 0);
}

#[test]
fn cap_exceeded_is_a_result() {
    let mut net = ping_network(2);
    assert_eq!(net.run_until(|_| false, 5).unwrap(), RunOutcome::CapExceeded { rounds: 5 });
    assert_eq!(net.round(), 5);
}

#[test]
fn transcripts_are_deterministic() {
    let run = || {
        let mut net = ping_network(3).with_transcript(true);
        net.run_until(|n| n.facility(0).acks == 3, 10).unwrap();
        net.transcript().unwrap().clone()
    };
    let t = run();
    assert_eq!(t, run());
    assert_eq!(t.lines(), 6);
    assert!(t.as_str().starts_with("1 f0→c0 Data 0 0\n"));
    assert!(t.as_str().contains("2 c2→f0 Data 0 0\n"));
}

#[test]
fn sequential_and_parallel_engines_agree() {
    let run = |p| {
        let mut net = Network::new(4, 50, 3, 100, |_| Scripted::default(), |_| Scripted::default())
            .with_parallelism(p)
            .with_transcript(true);
        for i in 0..4 {
            net.facility_mut(i).broadcast_at.push((1, data(i as u64)));
        }
        for j in 0..50 {
            let target = net.node_random_int(NodeId::client(j), 4) as usize - 1;
            net.client_mut(j).script.push((2, vec![(target, data(j as u64))]));
        }
        net.run_until(|n| n.round() == 2, 5).unwrap();
        net.transcript().unwrap().clone()
    };
    assert_eq!(run(Parallelism::Sequential), run(Parallelism::Parallel));
}

#[test]
fn rebind_keeps_round_and_streams() {
    let mut a = ping_network(2);
    a.run_round().unwrap();
    let mut b = a.rebind(|_, p| p.acks, |_, c| c.acked);
    assert_eq!(b.round(), 1);
    let mut fresh = ping_network(2);
    assert_eq!(b.node_random_int(NodeId::client(1), 1000), fresh.node_random_int(NodeId::client(1), 1000));
    assert!(!*b.client(0));
}

#[test]
fn node_streams_are_reproducible_and_distinct() {
    let mut a = NodeRng::new(42, NodeId::facility(3));
    let mut b = NodeRng::new(42, NodeId::facility(3));
    let mut c = NodeRng::new(42, NodeId::client(3));
    let xs: Vec<u64> = (0..100).map(|_| a.random_int(1 << 40)).collect();
    let ys: Vec<u64> = (0..100).map(|_| b.random_int(1 << 40)).collect();
    let zs: Vec<u64> = (0..100).map(|_| c.random_int(1 << 40)).collect();
    assert_eq!(xs, ys);
    assert_ne!(xs, zs);
    assert!((0..50).all(|_| a.random_int(1) == 1));
}

#[test]
fn node_random_int_is_uniform() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let mut rng = NodeRng::new(2024, NodeId::client(7));
    let mut counts = [0u64; 16];
    let draws = 100_000;
    for _ in 0..draws {
        let v = rng.random_int(16);
        assert!((1..=16).contains(&v));
        counts[v as usize - 1] += 1;
    }
    let expected = draws as f64 / 16.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(15.0).unwrap().cdf(stat);
    assert!(p > 0.001 && p < 0.999, "chi-square p-value {p}");
}
