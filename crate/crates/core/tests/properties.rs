use memsched::*;
use proptest::prelude::*;

fn chunk() -> impl Strategy<Value = (f64, f64, f64, f64, f64, bool)> {
    (
        0.5f64..=100.0,
        1.0f64..150.0,
        0.1f64..5.0,
        0.0f64..10.0,
        0.0f64..1.0,
        prop::bool::weighted(0.2),
    )
}

fn instance() -> impl Strategy<Value = (Vec<ChunkSpec>, Vec<ChunkState>)> {
    prop::collection::vec(chunk(), 1..12).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (r_on, extra, beta, imp, x, done))| {
                let spec = ChunkSpec::new(i as u32, r_on)
                    .unwrap()
                    .with_r_off(r_on + extra)
                    .with_beta(beta)
                    .with_importance(imp);
                let state = ChunkState {
                    x: if done { 1.0 } else { x },
                    completed: done,
                    ..ChunkState::fresh()
                };
                (spec, state)
            })
            .unzip()
    })
}

fn policy() -> impl Strategy<Value = Policy> {
    (0usize..4, 0.0f64..10.0, prop::bool::ANY).prop_map(|(k, threshold, static_w)| {
        let kind = match k {
            0 => PolicyKind::Sequential,
            1 => PolicyKind::AllSites,
            2 => PolicyKind::LeafCutter,
            _ => PolicyKind::ImportanceLeafCutter { threshold },
        };
        let weighting = if static_w { Weighting::StaticROn } else { Weighting::Series };
        Policy::new(kind, weighting)
    })
}

fn m(spec: &ChunkSpec, st: &ChunkState) -> f64 {
    memristance(spec, st.x).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn budget_is_exact((specs, states) in instance(), p in policy(), v in 0.01f64..100.0) {
        let a = p.allocate(&specs, &states, v);
        let any_open = states.iter().any(|s| !s.completed);
        prop_assert!(a.shares.iter().all(|&(_, s)| s > 0.0));
        for &(id, _) in &a.shares {
            let idx = specs.iter().position(|s| s.id == id).unwrap();
            prop_assert!(!states[idx].completed);
        }
        if any_open {
            prop_assert!((a.total() - v).abs() <= 1e-12 * v);
        } else {
            prop_assert!(a.is_empty());
        }
    }

    #[test]
    fn all_sites_gives_more_to_poorer((specs, states) in instance(), v in 0.01f64..100.0) {
        let a = Policy::from(PolicyKind::AllSites).allocate(&specs, &states, v);
        for j in 0..specs.len() {
            for k in 0..specs.len() {
                if states[j].completed || states[k].completed {
                    continue;
                }
                if m(&specs[j], &states[j]) > m(&specs[k], &states[k]) {
                    prop_assert!(a.share(specs[j].id) > a.share(specs[k].id));
                }
            }
        }
    }

    #[test]
    fn leaf_cutter_serves_richest_alone((specs, states) in instance(), v in 0.01f64..100.0) {
        let best = (0..specs.len())
            .min_by(|&a, &b| specs[a].r_on.total_cmp(&specs[b].r_on).then(specs[a].id.cmp(&specs[b].id)))
            .unwrap();
        let a = Policy::from(PolicyKind::LeafCutter).allocate(&specs, &states, v);
        if !states[best].completed {
            prop_assert_eq!(a.shares.clone(), vec![(specs[best].id, v)]);
        } else {
            let all = Policy::from(PolicyKind::AllSites).allocate(&specs, &states, v);
            prop_assert_eq!(a, all);
        }
    }

    #[test]
    fn sequential_picks_lowest_open_r_on((specs, states) in instance(), v in 0.01f64..100.0) {
        let a = Policy::from(PolicyKind::Sequential).allocate(&specs, &states, v);
        let best = (0..specs.len())
            .filter(|&i| !states[i].completed)
            .min_by(|&a, &b| specs[a].r_on.total_cmp(&specs[b].r_on).then(specs[a].id.cmp(&specs[b].id)));
        match best {
            Some(i) => prop_assert_eq!(a.shares, vec![(specs[i].id, v)]),
            None => prop_assert!(a.is_empty()),
        }
    }

    #[test]
    fn single_chunk_policies_agree((specs, states) in instance(), v in 0.01f64..100.0) {
        let (s, st) = (&specs[..1], &states[..1]);
        let reference = Policy::from(PolicyKind::Sequential).allocate(s, st, v);
        for kind in [PolicyKind::AllSites, PolicyKind::LeafCutter, PolicyKind::ImportanceLeafCutter { threshold: 3.0 }] {
            prop_assert_eq!(&Policy::from(kind).allocate(s, st, v), &reference);
        }
    }

    #[test]
    fn step_keeps_state_valid((specs, states) in instance(), v in 0.0f64..50.0, dt in 0.001f64..2.0) {
        for (spec, st) in specs.iter().zip(&states) {
            let next = step(*st, spec, v, dt);
            prop_assert!((0.0..=1.0).contains(&next.x));
            prop_assert_eq!(next.completed, next.x == 1.0);
            prop_assert!(next.x >= st.x);
            if v > 0.0 {
                prop_assert_eq!(next.age, 0);
            }
            if st.completed {
                prop_assert_eq!(next, *st);
            }
        }
    }

    #[test]
    fn rate_diminishes_with_progress(r_on in 0.5f64..=100.0, extra in 0.5f64..100.0, x in 0.0f64..0.99, v in 0.01f64..10.0) {
        let s = ChunkSpec::new(0u32, r_on).unwrap().with_r_off(r_on + extra);
        prop_assert!(transfer_rate(&s, x, v).unwrap() > transfer_rate(&s, x + 0.01, v).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traces_are_valid_and_deterministic(
        r in prop::collection::vec(1.0f64..=100.0, 1..8),
        p in policy(),
        window in 1u32..6,
        fresh in prop::bool::ANY,
    ) {
        let specs: Vec<ChunkSpec> = r.iter().enumerate()
            .map(|(i, &r_on)| ChunkSpec::new(i as u32, r_on).unwrap().with_r_off(120.0).with_window(window).with_importance(i as f64))
            .collect();
        let cfg = EngineConfig::new(2.0, 1.0).with_freshness(fresh).with_max_steps(20_000);
        let a = run(&specs, p, &cfg).unwrap();
        let b = run(&specs, p, &cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        prop_assert_eq!(ca, cb);
        prop_assert_eq!(a.makespan.is_some(), a.completions.len() == specs.len());
        if let Some(ms) = a.makespan {
            prop_assert!(a.completions.values().all(|&s| s <= ms));
        }
        for rec in &a.steps {
            prop_assert!(rec.allocation.total() <= 2.0 * (1.0 + 1e-12));
            prop_assert!(rec.states.iter().all(|s| (0.0..=1.0).contains(&s.x) && s.completed == (s.x == 1.0)));
        }
        let curve = completion_curve(&a);
        prop_assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1));
    }
}
