use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use graphlab_core::consistency::{check_sequential_consistency, Canary, LockTable};
use graphlab_core::engine::TerminationReason;
use graphlab_core::scheduling::{compile_plan, Stage};
use graphlab_core::{
    ConsistencyModel, DataGraph, Engine, EngineConfig, FunctionId, SchedulerKind, SchedulerSpec, SdtView,
    SharedDataTable, SyncSpec, Task, VertexId,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(rows: u32, cols: u32) -> DataGraph<u64, u64> {
    let mut g = DataGraph::new();
    for _ in 0..rows * cols {
        g.add_vertex(0).unwrap();
    }
    let id = |r: u32, c: u32| VertexId(r * cols + c);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                g.add_edge(id(r, c), id(r, c + 1), 0).unwrap();
                g.add_edge(id(r, c + 1), id(r, c), 0).unwrap();
            }
            if r + 1 < rows {
                g.add_edge(id(r, c), id(r + 1, c), 0).unwrap();
                g.add_edge(id(r + 1, c), id(r, c), 0).unwrap();
            }
        }
    }
    g.freeze();
    g
}

fn random_graph(rng: &mut ChaCha8Rng, n: u32, p: f64) -> DataGraph<u64, u64> {
    let mut g = DataGraph::new();
    for i in 0..n {
        g.add_vertex(i as u64 * 31 + 7).unwrap();
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(VertexId(u), VertexId(v), (u * 1000 + v) as u64).unwrap();
                g.add_edge(VertexId(v), VertexId(u), (v * 1000 + u) as u64).unwrap();
            }
        }
    }
    g.freeze();
    g
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.rotate_left(17) ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 29)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 32)
}

#[test]
fn traces_serializable_for_every_worker_count() {
    for model in [ConsistencyModel::Edge, ConsistencyModel::Full] {
        for workers in [1, 2, 4, 8] {
            let mut e: Engine<u64, u64> = Engine::new(EngineConfig::new(workers, model).with_trace(true));
            let f = e.register("smooth", move |s, ctx| {
                let sum: u64 = s.neighbors().iter().map(|&u| *s.neighbor(u)).sum();
                *s.vertex_mut() = sum / 2 + 1;
                if model == ConsistencyModel::Full {
                    for &u in s.neighbors() {
                        *s.neighbor_mut(u) += 1;
                    }
                }
                if *s.vertex() % 3 == 0 && ctx.vertex_update_count() < 3 {
                    ctx.add_task(ctx.task())?;
                }
                Ok(())
            });
            let mut g = grid(6, 6);
            let seeds: Vec<Task> = g.vertex_ids().map(|v| Task::new(v, f)).collect();
            let stats = e.run(&mut g, &SharedDataTable::new(), &SchedulerSpec::FifoMultiQueue, &seeds).unwrap();
            let trace = stats.trace.unwrap();
            assert_eq!(trace.len() as u64, stats.updates_applied);
            let verdict = check_sequential_consistency(&trace, model, g.topology().unwrap()).unwrap();
            assert!(verdict.is_serializable(), "{model} {workers}: {verdict:?}");
        }
    }
}

fn canary_run(model: ConsistencyModel, neighbor_writes: bool) -> (bool, u64, u64) {
    let mut g: DataGraph<Canary, ()> = DataGraph::new();
    let n = 6u32;
    for _ in 0..n {
        g.add_vertex(Canary::new()).unwrap();
    }
    for u in 0..n {
        for v in 0..n {
            if u != v {
                g.add_edge(VertexId(u), VertexId(v), ()).unwrap();
            }
        }
    }
    g.freeze();
    let interleaved = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let bumps = Arc::new(std::sync::atomic::AtomicU64::new(0));
    let mut e: Engine<Canary, ()> = Engine::new(EngineConfig::new(8, model));
    let (flag, count) = (interleaved.clone(), bumps.clone());
    let f = e.register("bump", move |s, _| {
        let mut targets = vec![s.center()];
        if neighbor_writes {
            targets.extend_from_slice(s.neighbors());
        }
        for v in targets {
            let probe = if v == s.center() { s.vertex() } else { s.neighbor(v) };
            if !probe.bump() {
                flag.store(true, std::sync::atomic::Ordering::SeqCst);
            }
            count.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        }
        Ok(())
    });
    e.run(&mut g, &SharedDataTable::new(), &SchedulerSpec::RoundRobin { sweeps: 40, function: f }, &[]).unwrap();
    let total: u64 = g.vertex_payloads().map(Canary::get).sum();
    (interleaved.load(std::sync::atomic::Ordering::SeqCst), total, bumps.load(std::sync::atomic::Ordering::SeqCst))
}

#[test]
fn canary_clean_under_edge_and_full() {
    let (bad, total, bumps) = canary_run(ConsistencyModel::Edge, false);
    assert!(!bad && total == bumps);
    let (bad, total, bumps) = canary_run(ConsistencyModel::Full, true);
    assert!(!bad && total == bumps);
}

#[test]
fn canary_catches_neighbor_writes_under_vertex() {
    let caught = (0..20).any(|_| {
        let (bad, total, bumps) = canary_run(ConsistencyModel::Vertex, true);
        bad || total != bumps
    });
    assert!(caught, "misdeclared neighbor writes were never observed interleaving");
}

/// Deterministic step shared by the plan run and the staged reference.
fn step(stage_fn: u32, own: u64, nbrs: &[u64], edges: &[u64]) -> (u64, Vec<u64>) {
    let mut h = mix(own, stage_fn as u64);
    for &x in nbrs {
        h = mix(h, x);
    }
    for &x in edges {
        h = mix(h, x);
    }
    let new_edges = edges.iter().map(|&x| mix(x, h)).collect();
    (h, new_edges)
}

fn adjacent_edges(g: &DataGraph<u64, u64>, v: VertexId) -> Vec<graphlab_core::EdgeId> {
    let t = g.topology().unwrap();
    let mut es: Vec<_> = t.in_edges(v).iter().chain(t.out_edges(v)).copied().collect();
    es.sort_unstable();
    es
}

fn random_stages(rng: &mut ChaCha8Rng, g: &DataGraph<u64, u64>, n_stages: usize, n_fns: u32) -> Vec<Stage> {
    let t = g.topology().unwrap();
    (0..n_stages)
        .map(|_| {
            let mut chosen: Vec<VertexId> = Vec::new();
            for v in t.vertices() {
                if rng.gen_bool(0.4) && chosen.iter().all(|&u| !t.is_neighbor(u, v)) {
                    chosen.push(v);
                }
            }
            Stage::new(chosen, FunctionId(rng.gen_range(0..n_fns)))
        })
        .collect()
}

#[test]
fn plan_dispatch_matches_staged_execution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for instance in 0..20 {
        let n = rng.gen_range(5..40);
        let p = rng.gen_range(0.05..0.3);
        let base = random_graph(&mut rng, n, p);
        let n_stages = rng.gen_range(1..7);
        let stages = random_stages(&mut rng, &base, n_stages, 2);

        let mut reference = base.clone();
        for st in &stages {
            let t = reference.topology().unwrap().clone();
            let mut updates = Vec::new();
            for &v in &st.vertices {
                let nbrs: Vec<u64> = t.neighbors(v).iter().map(|&u| *reference.vertex_data(u)).collect();
                let es = adjacent_edges(&reference, v);
                let ev: Vec<u64> = es.iter().map(|&e| *reference.edge_data(e)).collect();
                updates.push((v, es, step(st.function.0, *reference.vertex_data(v), &nbrs, &ev)));
            }
            for (v, es, (own, new_edges)) in updates {
                *reference.vertex_data_mut(v) = own;
                for (e, x) in es.into_iter().zip(new_edges) {
                    *reference.edge_data_mut(e) = x;
                }
            }
        }

        let plan = Arc::new(compile_plan(&stages, base.topology().unwrap(), ConsistencyModel::Edge).unwrap());
        for workers in [1, 2, 8] {
            let mut e: Engine<u64, u64> = Engine::new(EngineConfig::new(workers, ConsistencyModel::Edge));
            for k in 0..2u32 {
                e.register(format!("step{k}"), move |s, _| {
                    let nbrs: Vec<u64> = s.neighbors().iter().map(|&u| *s.neighbor(u)).collect();
                    let mut es: Vec<_> = s.in_edges().iter().chain(s.out_edges()).copied().collect();
                    es.sort_unstable();
                    let ev: Vec<u64> = es.iter().map(|&e| *s.edge(e)).collect();
                    let (own, new_edges) = step(k, *s.vertex(), &nbrs, &ev);
                    *s.vertex_mut() = own;
                    for (e, x) in es.into_iter().zip(new_edges) {
                        *s.edge_mut(e) = x;
                    }
                    Ok(())
                });
            }
            let mut g = base.clone();
            let stats = e
                .run(&mut g, &SharedDataTable::new(), &SchedulerSpec::Set { plan: plan.clone(), rounds: 1 }, &[])
                .unwrap();
            assert_eq!(stats.updates_applied as usize, plan.len());
            assert_eq!(
                g.clone().into_payloads(),
                reference.clone().into_payloads(),
                "instance {instance} with {workers} workers"
            );
        }
    }
}

#[test]
fn single_worker_fifo_is_deterministic() {
    let run = || {
        let mut e: Engine<u64, u64> = Engine::new(EngineConfig::new(1, ConsistencyModel::Edge).with_seed(3));
        let f = e.register("walk", |s, ctx| {
            let x: u64 = ctx.rng().gen_range(0..1000);
            *s.vertex_mut() = mix(*s.vertex(), x);
            let nbrs = s.neighbors();
            if ctx.vertex_update_count() < 4 && !nbrs.is_empty() {
                let pick = nbrs[ctx.rng().gen_range(0..nbrs.len())];
                ctx.add_task(Task::new(pick, ctx.task().function))?;
            }
            Ok(())
        });
        let mut g = grid(5, 5);
        e.run(&mut g, &SharedDataTable::new(), &SchedulerSpec::FifoSingle, &[Task::new(VertexId(0), f)]).unwrap();
        g.into_payloads()
    };
    assert_eq!(run(), run());
}

#[test]
fn update_count_matches_pops_under_stress() {
    for kind in [SchedulerKind::FifoMultiQueue, SchedulerKind::PriorityApprox, SchedulerKind::FifoPartitioned] {
        let mut e: Engine<u64, u64> = Engine::new(EngineConfig::new(8, ConsistencyModel::Edge));
        let f = e.register("bounce", |s, ctx| {
            *s.vertex_mut() += 1;
            if *s.vertex() < 20 {
                for &u in s.neighbors() {
                    ctx.schedule(u, ctx.task().function, *s.vertex() as f64)?;
                }
            }
            Ok(())
        });
        let mut g = grid(8, 8);
        let stats = e
            .run(&mut g, &SharedDataTable::new(), &SchedulerSpec::dynamic(kind).unwrap(), &[Task::new(VertexId(0), f)])
            .unwrap();
        let total: u64 = g.vertex_payloads().sum();
        assert_eq!(total, stats.updates_applied, "{kind}");
        assert_eq!(stats.per_worker.iter().sum::<u64>(), stats.updates_applied);
        assert_eq!(stats.reason, TerminationReason::Quiescent);
    }
}

#[test]
fn randomized_lock_storm_completes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_graph(&mut rng, 100, 0.3);
    let t = g.topology().unwrap();
    let table = LockTable::new(100);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for w in 0..16u64 {
            let (table, tx) = (&table, tx.clone());
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(w);
                for _ in 0..625 {
                    let v = VertexId(rng.gen_range(0..100));
                    let model = ConsistencyModel::ALL[rng.gen_range(0..3)];
                    drop(table.acquire(t, model, v));
                }
                tx.send(()).unwrap();
            });
        }
        for _ in 0..16 {
            rx.recv_timeout(Duration::from_secs(60)).expect("lock storm stalled");
        }
    });
    for v in t.vertices() {
        assert!(table.is_free(v));
    }
}

#[test]
fn background_sync_sees_progress() {
    let mut e: Engine<u64, u64> = Engine::new(EngineConfig::new(2, ConsistencyModel::Edge));
    let f = e.register("count", |s, _| {
        *s.vertex_mut() += 1;
        Ok(())
    });
    let seen = Arc::new(parking_lot::Mutex::new(Vec::new()));
    let log = seen.clone();
    e.add_sync(
        SyncSpec::new(
            "sum",
            0u64,
            |v: &u64, a| a + v,
            move |a, _: &SdtView| {
                log.lock().push(a);
                a
            },
        )
        .with_merge(|a, b| a + b)
        .with_period(Duration::from_millis(1)),
    );
    let sdt = SharedDataTable::new();
    let mut g = grid(20, 20);
    e.run(&mut g, &sdt, &SchedulerSpec::RoundRobin { sweeps: 30, function: f }, &[]).unwrap();
    assert_eq!(*sdt.get::<u64>("sum").unwrap(), 400 * 30);
    let values = seen.lock();
    assert!(values.windows(2).all(|w| w[0] <= w[1]), "monotone counter went backwards");
}

proptest! {
    #[test]
    fn chunked_syncs_equal_sequential_fold(values in proptest::collection::vec(0u64..1000, 1..300), chunks in 1usize..12) {
        let mut g: DataGraph<u64, ()> = DataGraph::new();
        for v in &values {
            g.add_vertex(*v).unwrap();
        }
        g.freeze();
        let sdt = SharedDataTable::new();
        let sum = SyncSpec::new("sum", 0u64, |v: &u64, a| a + v, |a, _: &SdtView| a).with_merge(|a, b| a + b);
        prop_assert_eq!(sum.evaluate(&g, &sdt, chunks), values.iter().sum::<u64>());
        let max = SyncSpec::new("max", 0u64, |v: &u64, a: u64| a.max(*v), |a, _: &SdtView| a).with_merge(u64::max);
        prop_assert_eq!(max.evaluate(&g, &sdt, chunks), *values.iter().max().unwrap());
        let hist = SyncSpec::new(
            "hist",
            vec![0u64; 10],
            |v: &u64, mut h: Vec<u64>| { h[(*v / 100) as usize] += 1; h },
            |h, _: &SdtView| h,
        )
        .with_merge(|a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        let mut expect = vec![0u64; 10];
        for v in &values {
            expect[(*v / 100) as usize] += 1;
        }
        prop_assert_eq!(hist.evaluate(&g, &sdt, chunks), expect);
    }
}
