use dude_core::linalg::Matrix;
use dude_core::trainer::{
    eval_goal, evaluate, loss_and_grads, make_task, summarize, train, Model, OptimizerKind, Scheduler, Target,
    TaskKind, TrainConfig,
};
use dude_core::{AdapterConfig, Error, Method};

fn sgd(steps: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        steps,
        batch: 16,
        base_lr: lr,
        warmup_frac: 0.0,
        scheduler: Scheduler::Constant,
        optimizer: OptimizerKind::Sgd,
        seed: 3,
        eval_every: 100,
        eval_size: 64,
    }
}

#[test]
fn full_fine_tuning_solves_noiseless_least_squares() {
    let task = make_task(TaskKind::TeacherStudent, 8, 8, 2, 0.0, 11).unwrap();
    let cfg = TrainConfig { batch: 32, ..sgd(2000, 0.05) };
    let mut model = Model::for_task(&task, &AdapterConfig::new(Method::Full, 1)).unwrap();
    let records = train(&mut model, &task, &cfg).unwrap();

    // Independent loop: W ← W − lr·(2/n)·Σ (Wx − y)xᵀ on the same batches.
    let teacher = task.teacher().unwrap();
    let mut w = task.base().clone();
    let mut rng = task.train_stream(cfg.seed);
    let mut reference = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let batch = task.batch(&mut rng, cfg.batch);
        let n = batch.len() as f64;
        let mut grad = Matrix::zeros(8, 8);
        let mut loss = 0.0;
        for s in &batch {
            let y = w.matvec(&s.x).unwrap();
            let t = teacher.matvec(&s.x).unwrap();
            for i in 0..8 {
                let e = y[i] - t[i];
                loss += e * e / n;
                for j in 0..8 {
                    grad[(i, j)] += 2.0 * e * s.x[j] / n;
                }
            }
        }
        reference.push(loss);
        w = w.add_scaled(-cfg.base_lr, &grad).unwrap();
    }
    for (r, expected) in records.iter().zip(&reference) {
        assert!((r.loss - expected).abs() <= 1e-9 * (1.0 + expected), "step {}: {} vs {expected}", r.step, r.loss);
    }
    let best = records.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    assert!(best <= 1e-6, "best loss {best}");
    assert!(model.layers()[0].adapter.base().sub(teacher).unwrap().max_abs() <= 1e-3);
}

#[test]
fn zero_learning_rate_never_moves_the_model() {
    let task = make_task(TaskKind::TeacherStudent, 6, 5, 2, 0.05, 2).unwrap();
    let cfg = sgd(30, 0.0);
    for method in Method::ALL {
        let fresh = Model::for_task(&task, &AdapterConfig::new(method, 2).with_seed(1)).unwrap();
        let mut model = fresh.clone();
        let records = train(&mut model, &task, &cfg).unwrap();
        assert_eq!(model, fresh);
        let mut rng = task.train_stream(cfg.seed);
        for r in &records {
            let (loss, _) = loss_and_grads(&fresh, &task.batch(&mut rng, cfg.batch)).unwrap();
            assert_eq!(r.loss.to_bits(), loss.to_bits());
            assert_eq!(r.lr, 0.0);
        }
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let task = make_task(TaskKind::TeacherStudent, 8, 6, 2, 0.01, 4).unwrap();
    let cfg = TrainConfig { steps: 120, eval_every: 25, ..TrainConfig::default() };
    for method in [Method::Dude, Method::Lora] {
        let adapter = AdapterConfig::new(method, 2).with_seed(9);
        let run = || {
            let mut model = Model::for_task(&task, &adapter).unwrap();
            let records = train(&mut model, &task, &cfg).unwrap();
            (records, model)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_eq!(a.iter().filter(|r| r.eval.is_some()).count(), 5);
        assert!(a.last().unwrap().eval.is_some());
    }
}

#[test]
fn frozen_residual_stays_bit_identical() {
    let task = make_task(TaskKind::TeacherStudent, 7, 5, 2, 0.01, 8).unwrap();
    let cfg = TrainConfig { steps: 200, base_lr: 1e-2, ..TrainConfig::default() };
    for method in Method::ALL.into_iter().filter(|m| m.is_low_rank()) {
        let mut model = Model::for_task(&task, &AdapterConfig::new(method, 2).with_seed(2)).unwrap();
        let before = model.layers()[0].adapter.base().clone();
        train(&mut model, &task, &cfg).unwrap();
        let after = model.layers()[0].adapter.base();
        assert!(
            before.as_slice().iter().zip(after.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "{method}"
        );
    }
}

#[test]
fn logged_grad_norm_matches_recomputation() {
    let task = make_task(TaskKind::TeacherStudent, 6, 6, 2, 0.01, 5).unwrap();
    let adapter = AdapterConfig::new(Method::Dude, 2).with_seed(5);
    let cfg = TrainConfig { scheduler: Scheduler::Constant, ..sgd(6, 0.02) };
    let mut model = Model::for_task(&task, &adapter).unwrap();
    let records = train(&mut model, &task, &cfg).unwrap();

    // With a constant schedule, a `t`-step run is a prefix of the full run.
    for (t, record) in records.iter().enumerate() {
        let mut replay = Model::for_task(&task, &adapter).unwrap();
        if t > 0 {
            train(&mut replay, &task, &TrainConfig { steps: t, ..cfg }).unwrap();
        }
        let mut rng = task.train_stream(cfg.seed);
        let batch = (0..=t).map(|_| task.batch(&mut rng, cfg.batch)).last().unwrap();
        let (_, grads) = loss_and_grads(&replay, &batch).unwrap();
        let sum_sq: f64 = grads.iter().flat_map(|g| g.as_slices()).flatten().map(|v| v * v).sum();
        assert!((record.grad_norm - sum_sq.sqrt()).abs() <= 1e-12 * (1.0 + record.grad_norm));
    }
}

#[test]
fn untouched_teacher_leaves_only_noise() {
    let (d, sigma) = (8, 0.3);
    let task = make_task(TaskKind::TeacherStudent, d, 5, 0, sigma, 21).unwrap();
    let model = Model::for_task(&task, &AdapterConfig::new(Method::Lora, 2).with_seed(1)).unwrap();
    let mse = evaluate(&model, &task.eval_set(20_000)).unwrap();
    let expected = sigma * sigma * d as f64;
    // Relative standard error is √(2/(d·n)) ≈ 0.4%.
    assert!((mse - expected).abs() <= 0.03 * expected, "{mse} vs {expected}");
}

#[test]
fn losses_are_non_negative_and_classification_learns() {
    let task = make_task(TaskKind::ClusterClassify, 4, 6, 0, 0.3, 13).unwrap();
    let mut model = Model::for_task(&task, &AdapterConfig::new(Method::Dude, 2).with_seed(13)).unwrap();
    let before = evaluate(&model, &task.eval_set(256)).unwrap();
    let cfg = TrainConfig { steps: 300, base_lr: 0.05, ..TrainConfig::default() };
    let records = train(&mut model, &task, &cfg).unwrap();
    assert!(records.iter().all(|r| r.loss >= 0.0));
    let summary = summarize(&records, eval_goal(task.loss_kind())).unwrap();
    let best = summary.best_eval.unwrap();
    assert!((0.0..=1.0).contains(&best));
    assert!(best >= before, "accuracy {before} -> {best}");
    assert!(matches!(task.eval_set(1)[0].target, Target::Class(_)));
}

#[test]
fn divergence_reports_the_failing_step() {
    let task = make_task(TaskKind::TeacherStudent, 6, 6, 2, 0.01, 1).unwrap();
    let mut model = Model::for_task(&task, &AdapterConfig::new(Method::Full, 1)).unwrap();
    let err = train(&mut model, &task, &sgd(500, 1e6)).unwrap_err();
    match err {
        Error::NumericFailure { step: Some(step), .. } => assert!(step > 0 && step < 500),
        other => panic!("expected a numeric failure, got {other:?}"),
    }
}

/// Mean final training loss across `seeds` on the rank-2 teacher-student task.
fn mean_final_loss(method: Method, seeds: &[u64]) -> f64 {
    let total: f64 = seeds
        .iter()
        .map(|&seed| {
            let task = make_task(TaskKind::TeacherStudent, 16, 16, 2, 0.01, seed).unwrap();
            let mut model = Model::for_task(&task, &AdapterConfig::new(method, 2).with_seed(seed)).unwrap();
            let cfg = TrainConfig { steps: 1000, seed, ..TrainConfig::default() };
            let records = train(&mut model, &task, &cfg).unwrap();
            summarize(&records, eval_goal(task.loss_kind())).unwrap().final_loss
        })
        .sum();
    total / seeds.len() as f64
}

#[test]
fn dude_converges_at_least_as_far_as_lora() {
    let seeds = [42, 78, 512];
    let dude = mean_final_loss(Method::Dude, &seeds);
    let lora = mean_final_loss(Method::Lora, &seeds);
    assert!(dude <= lora, "mean final loss: dude {dude:.4e}, lora {lora:.4e}");
}
