use agentcycle::generator::{generate_corpus, max_pairwise_cosine, write_corpus, GeneratorSpec};
use agentcycle::graph_views::build_call_stack;
use agentcycle::semantic::{builtin_embed, cosine, sibling_pairs, DEFAULT_DIMENSION};
use agentcycle::{GroundTruthClass, Trajectory};

fn corpus() -> Vec<Trajectory> {
    generate_corpus(&GeneratorSpec::per_class(11, 30))
        .unwrap()
        .trajectories
}

fn of(corpus: &[Trajectory], class: GroundTruthClass) -> Vec<&Trajectory> {
    corpus.iter().filter(|t| t.label() == Some(class)).collect()
}

fn root_output(t: &Trajectory) -> &str {
    &t.roots().next().unwrap().output
}

#[test]
fn same_seed_same_bytes() {
    let spec = GeneratorSpec::per_class(5, 4);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_corpus(&generate_corpus(&spec).unwrap().trajectories, &mut a).unwrap();
    write_corpus(&generate_corpus(&spec).unwrap().trajectories, &mut b).unwrap();
    assert_eq!(a, b);
    let mut c = Vec::new();
    write_corpus(
        &generate_corpus(&GeneratorSpec::per_class(6, 4))
            .unwrap()
            .trajectories,
        &mut c,
    )
    .unwrap();
    assert_ne!(a, c);
}

#[test]
fn productive_outputs_are_dissimilar() {
    let c = corpus();
    for t in of(&c, GroundTruthClass::Productive) {
        let outs: Vec<&str> = t
            .spans()
            .iter()
            .map(|s| s.output.as_str())
            .filter(|o| !o.is_empty())
            .collect();
        assert!(max_pairwise_cosine(&outs) < 0.6, "{}", t.trace_id());
        assert!(t.spans().iter().all(|s| !s.is_error()));
    }
}

#[test]
fn error_classes() {
    let c = corpus();
    for t in of(&c, GroundTruthClass::Error) {
        assert!(t.spans().iter().any(|s| s.is_error()));
        assert!(root_output(t).is_empty());
    }
    for t in of(&c, GroundTruthClass::IntermediateError) {
        assert!(t.spans().iter().any(|s| s.is_error()));
        assert!(!root_output(t).is_empty());
    }
}

#[test]
fn error_cycles_end_in_recursion_limit() {
    let c = corpus();
    let cycles = of(&c, GroundTruthClass::ErrorCycle);
    assert_eq!(cycles.len(), 30);
    for t in cycles {
        let seq = build_call_stack(t);
        let last = t.span(seq.span_refs.last().unwrap()).unwrap();
        assert_eq!(last.error_type.as_deref(), Some("recursion_limit"));
    }
}

#[test]
fn silent_cycles_have_near_duplicate_siblings() {
    let c = corpus();
    for t in of(&c, GroundTruthClass::SilentCycle) {
        let best = sibling_pairs(t)
            .into_iter()
            .filter(|(l, r)| l.op == r.op && !l.output.is_empty() && !r.output.is_empty())
            .map(|(l, r)| {
                cosine(
                    &builtin_embed(&l.output, DEFAULT_DIMENSION),
                    &builtin_embed(&r.output, DEFAULT_DIMENSION),
                )
                .unwrap()
            })
            .fold(0.0, f64::max);
        assert!(best > 0.9, "{}: {best}", t.trace_id());
    }
}
