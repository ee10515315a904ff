//! Cross-module integration checks: Lipschitz envelopes, composition
//! algebra at the network level, temperature annealing against the moving
//! manifold, and the interior-audit diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use logikon::constraint::{evaluate, extract_constraints, interior_audit};
use logikon::lawvere::assignment_bits;
use logikon::net::{
    assign_model, compile, compose_parallel, compose_sequential, forward_outputs,
    lipschitz_envelope, InitScheme,
};
use logikon::opt::{initialize_on_manifold, train, Dataset, InitMode, OptimizerConfig};
use logikon::relax::{anneal_schedule, lipschitz_bound, AnnealSpec, ScheduleShape, Temperature};
use logikon::theory::{bool_theory, parse_theory, Term};

fn temp(b: f64) -> Temperature {
    Temperature::new(b).unwrap()
}

fn var(i: usize) -> Term {
    Term::Var(i)
}

#[test]
fn empirical_lipschitz_stays_inside_the_graph_envelope() {
    // the closed-form layer bound (beta sqrt2/4)^d is not a sound envelope
    // for every graph: negation's weight puts its layer constant at beta/2,
    // and skip paths beat the d-th power when the base is below 1. The
    // per-graph envelope is sound; random difference quotients must respect
    // it, and must respect the closed form too on the graphs where the
    // closed form dominates.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let exprs: Vec<(Term, usize)> = vec![
        (Term::app("and", vec![var(0), var(1)]), 2),
        (
            Term::app("and", vec![var(0), Term::app("or", vec![var(1), var(2)])]),
            3,
        ),
        (
            Term::app(
                "not",
                vec![Term::app(
                    "or",
                    vec![
                        Term::app("and", vec![var(0), var(1)]),
                        Term::app("not", vec![var(2)]),
                    ],
                )],
            ),
            3,
        ),
        (
            Term::app("not", vec![Term::app("not", vec![Term::app("not", vec![var(0)])])]),
            1,
        ),
    ];
    for beta_value in [1.0, 4.0, 8.0] {
        let beta = temp(beta_value);
        let (model, store) = assign_model(&bool_theory(), beta, InitScheme::Canonical);
        for (expr, n) in &exprs {
            let graph = compile(&model, expr, *n).unwrap();
            assert!(graph.depth() <= 3);
            let envelope = lipschitz_envelope(&graph, &store, beta).unwrap();
            let closed_form = lipschitz_bound(graph.depth(), beta);
            let check_closed_form = closed_form >= envelope;
            for _ in 0..1000 {
                let a: Vec<f64> = (0..*n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let b: Vec<f64> = (0..*n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let din: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if din < 1e-12 {
                    continue;
                }
                let fa = forward_outputs(&graph, &store, &a, beta).unwrap()[0];
                let fb = forward_outputs(&graph, &store, &b, beta).unwrap()[0];
                let ratio = (fa - fb).abs() / din;
                assert!(
                    ratio <= envelope * (1.0 + 1e-12),
                    "beta {beta_value} depth {} ratio {ratio} envelope {envelope}",
                    graph.depth()
                );
                if check_closed_form {
                    assert!(ratio <= closed_form * (1.0 + 1e-12));
                }
            }
        }
    }
}

#[test]
fn sequential_composition_is_associative_on_forward_values() {
    let beta = temp(7.0);
    let (model, store) = assign_model(&bool_theory(), beta, InitScheme::Canonical);
    let f = compile(&model, &Term::app("not", vec![var(0)]), 1).unwrap();
    let g = compile(&model, &Term::app("and", vec![var(0), var(0)]), 1).unwrap();
    let h = compile(&model, &Term::app("or", vec![var(0), var(0)]), 1).unwrap();
    let left = compose_sequential(&compose_sequential(&f, &g).unwrap(), &h).unwrap();
    let right = compose_sequential(&f, &compose_sequential(&g, &h).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let x = vec![rng.gen_range(0.0..1.0)];
        let a = forward_outputs(&left, &store, &x, beta).unwrap()[0];
        let b = forward_outputs(&right, &store, &x, beta).unwrap()[0];
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn parallel_then_sequential_composes_cleanly() {
    // (not x, and(y, z)) fed into or: equivalent to or(not(x), and(y, z))
    let beta = temp(40.0);
    let (model, store) = assign_model(&bool_theory(), beta, InitScheme::Canonical);
    let not_g = compile(&model, &Term::app("not", vec![var(0)]), 1).unwrap();
    let and_g = compile(&model, &Term::app("and", vec![var(0), var(1)]), 2).unwrap();
    let or_g = compile(&model, &Term::app("or", vec![var(0), var(1)]), 2).unwrap();
    let pair = compose_parallel(&not_g, &and_g).unwrap();
    let pipeline = compose_sequential(&pair, &or_g).unwrap();

    let direct = compile(
        &model,
        &Term::app(
            "or",
            vec![
                Term::app("not", vec![var(0)]),
                Term::app("and", vec![var(1), var(2)]),
            ],
        ),
        3,
    )
    .unwrap();
    for v in 0..8usize {
        let x: Vec<f64> = (0..3).map(|i| ((v >> i) & 1) as f64).collect();
        let a = forward_outputs(&pipeline, &store, &x, beta).unwrap()[0];
        let b = forward_outputs(&direct, &store, &x, beta).unwrap()[0];
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn annealing_re_retracts_onto_the_moving_manifold() {
    // De Morgan alone gives a positive-dimensional manifold (4 vertex
    // residuals, 8 parameters) whose location depends on beta, so the loop
    // keeps stepping and each temperature change needs a real correction.
    // The distributivity system would not do: its 8 residuals pin all 6
    // parameters, every projected gradient is zero, and training stops
    // before the schedule advances.
    let theory = parse_theory(
        "theory DM { op and:2; op or:2; op not:1; \
         axiom dm: not(and(x, y)) = or(not(x), not(y)); }",
    )
    .unwrap();
    let upward = anneal_schedule(&AnnealSpec {
        beta_start: 4.0,
        beta_end: 6.0,
        steps: 3,
        shape: ScheduleShape::Linear,
    })
    .unwrap();
    let (model, canonical) = assign_model(&theory, temp(4.0), InitScheme::Canonical);
    let gset = extract_constraints(&theory, &model).unwrap();
    let graph = compile(
        &model,
        &Term::app("not", vec![Term::app("and", vec![var(0), var(1)])]),
        2,
    )
    .unwrap();
    // softened nand targets keep the loss gradient alive on the manifold
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..4usize)
        .map(|v| {
            let bits = assignment_bits(v, 2);
            let input: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let truth = if bits[0] && bits[1] { 0.0 } else { 1.0 };
            (input, vec![0.8 * truth + 0.1])
        })
        .collect();
    let data = Dataset::new(samples);

    // upward annealing: every temperature change triggers a re-retraction,
    // though sharper gates usually leave the iterate feasible already
    let cfg = OptimizerConfig {
        beta_schedule: upward,
        max_iterations: 3,
        stationarity_tolerance: 1e-30,
        learning_rate: 0.05,
        ..OptimizerConfig::default()
    };
    let (start, _) =
        initialize_on_manifold(&gset, &canonical, temp(4.0), InitMode::Canonical, &cfg).unwrap();
    let (trained, trace) = train(&graph, &gset, &data, &start, &cfg).unwrap();
    assert_eq!(trace.beta_corrections.len(), 2);
    let final_g = evaluate(&gset, &trained, temp(6.0)).unwrap().norm();
    assert!(final_g <= cfg.constraint_tolerance);
    let betas: Vec<f64> = trace.records.iter().map(|r| r.beta).collect();
    assert_eq!(betas, vec![4.0, 5.0, 6.0]);

    // softening the gates moves the manifold away from the iterate, so the
    // correction after the change is a real Newton pull, not a no-op
    let cfg_down = OptimizerConfig {
        beta_schedule: vec![6.0, 3.0, 3.0],
        max_iterations: 3,
        stationarity_tolerance: 1e-30,
        learning_rate: 0.05,
        ..OptimizerConfig::default()
    };
    let (start, _) =
        initialize_on_manifold(&gset, &canonical, temp(6.0), InitMode::Canonical, &cfg_down)
            .unwrap();
    let (trained, trace) = train(&graph, &gset, &data, &start, &cfg_down).unwrap();
    assert_eq!(trace.beta_corrections.len(), 1);
    assert!(
        trace.beta_corrections[0].1 > 1e-12,
        "softening should require a real correction, got {}",
        trace.beta_corrections[0].1
    );
    let final_g = evaluate(&gset, &trained, temp(3.0)).unwrap().norm();
    assert!(final_g <= cfg_down.constraint_tolerance);
}

#[test]
fn interior_audit_quantifies_vertex_only_enforcement() {
    // on the distributivity manifold the vertex residuals are zero while
    // interior deviations stay measurable; the audit reports, never enforces
    let theory = parse_theory(
        "theory D { op and:2; op or:2; \
         axiom distrib: and(x, or(y, z)) = or(and(x, y), and(x, z)); }",
    )
    .unwrap();
    let beta = temp(8.0);
    let (model, canonical) = assign_model(&theory, beta, InitScheme::Canonical);
    let gset = extract_constraints(&theory, &model).unwrap();
    let cfg = OptimizerConfig::default();
    let (on_manifold, _) =
        initialize_on_manifold(&gset, &canonical, beta, InitMode::Canonical, &cfg).unwrap();
    assert!(evaluate(&gset, &on_manifold, beta).unwrap().norm() <= 1e-8);
    let audit = interior_audit(&gset, &on_manifold, beta, 200, 3).unwrap();
    let (_, worst) = &audit[0];
    // the on-manifold parameters are sharp, so interior deviations reach
    // order one even though all eight vertex residuals sit below 1e-8
    assert!(*worst > 1e-3, "interior deviation unexpectedly small: {worst}");
    assert!(*worst <= 1.0, "deviation cannot exceed the output range: {worst}");
}

#[test]
fn trained_bundle_survives_export_import_train_again() {
    use logikon::net::{export_network, import_network};
    let theory = parse_theory(
        "theory C { op and:2; axiom comm: and(x,y) = and(y,x); }",
    )
    .unwrap();
    let beta = temp(4.0);
    let (model, store) = assign_model(&theory, beta, InitScheme::Canonical);
    let gset = extract_constraints(&theory, &model).unwrap();
    let graph = compile(&model, &Term::app("and", vec![var(0), var(1)]), 2).unwrap();
    let data = Dataset::new(vec![
        (vec![0.0, 0.0], vec![0.0]),
        (vec![1.0, 1.0], vec![1.0]),
    ]);
    let cfg = OptimizerConfig {
        beta_schedule: vec![4.0],
        max_iterations: 50,
        ..OptimizerConfig::default()
    };
    let (start, _) = initialize_on_manifold(
        &gset,
        &store,
        beta,
        InitMode::RandomThenRetract { seed: 3, scale: 0.3 },
        &cfg,
    )
    .unwrap();
    let (trained, _) = train(&graph, &gset, &data, &start, &cfg).unwrap();

    let bundle = export_network(&graph, &trained, beta).unwrap();
    let json = serde_json::to_string(&bundle).unwrap();
    let reparsed: logikon::net::NetworkExport = serde_json::from_str(&json).unwrap();
    let (graph2, store2, beta2) = import_network(&reparsed).unwrap();

    // imported parameters are on the manifold and training can resume
    assert!(evaluate(&gset, &store2, beta2).unwrap().norm() <= cfg.constraint_tolerance);
    let (resumed, trace) = train(&graph2, &gset, &data, &store2, &cfg).unwrap();
    assert!(evaluate(&gset, &resumed, beta2).unwrap().norm() <= cfg.constraint_tolerance);
    assert!(!trace.records.is_empty());
}

#[test]
fn retraction_fixtures_on_the_distributivity_manifold() {
    // frozen step counts and residuals for the canonical projection and for
    // a small tangent excursion; deterministic given the pure-Rust SVD
    let theory = parse_theory(
        "theory D { op and:2; op or:2; \
         axiom distrib: and(x, or(y, z)) = or(and(x, y), and(x, z)); }",
    )
    .unwrap();
    let cfg = OptimizerConfig::default();
    let mut observed = Vec::new();
    for beta_value in [6.0, 8.0] {
        let beta = temp(beta_value);
        let (model, store) = assign_model(&theory, beta, InitScheme::Canonical);
        let gset = extract_constraints(&theory, &model).unwrap();
        let (on, projected) =
            initialize_on_manifold(&gset, &store, beta, InitMode::Canonical, &cfg).unwrap();
        assert!(projected.residual_norm <= cfg.constraint_tolerance);

        // random ambient direction, projected to the tangent space and
        // scaled to norm 0.01
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ambient = nalgebra::DVector::from_fn(on.values().len(), |_, _| rng.gen_range(-1.0..1.0));
        let jac = logikon::constraint::jacobian(&gset, &on, beta).unwrap();
        let tangent = logikon::opt::project_tangent(&ambient, &jac, 1e-10);
        let step = if tangent.norm() > 1e-12 {
            0.01 * &tangent / tangent.norm()
        } else {
            tangent.clone()
        };
        let w = nalgebra::DVector::from_column_slice(on.values());
        let mut scratch = on.clone();
        let after_step = logikon::opt::retract(&w, &step, &gset, &mut scratch, beta, &cfg).unwrap();
        assert!(after_step.residual_norm <= cfg.constraint_tolerance);

        // the constraint Jacobian has full column rank here, so the tangent
        // space is trivial: the projected direction vanishes and the
        // "tangent step" retraction is a no-op
        assert!(tangent.norm() < 1e-12, "unexpected tangent at beta {beta_value}");
        assert_eq!(after_step.newton_steps, 0);

        // even a 0.01 ambient excursion stays within tolerance: at the
        // sharp solution the residual field is nearly flat, so the
        // epsilon-feasible set around it is fat
        let ambient_step = 0.01 * &ambient / ambient.norm();
        let off = logikon::opt::retract(&w, &ambient_step, &gset, &mut scratch, beta, &cfg)
            .unwrap();
        assert!(off.residual_norm <= cfg.constraint_tolerance);
        observed.push((beta_value, projected.newton_steps, off.newton_steps));
    }
    // frozen regression fixtures: cold-start Newton counts and the
    // ambient-excursion correction counts
    assert_eq!(observed, vec![(6.0, 17, 0), (8.0, 15, 0)], "observed: {observed:?}");
}
