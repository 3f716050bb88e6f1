//! Property tests over the public surface.

mod common;

use clarity_core::adapters::{ScriptedStub, StubRule};
use clarity_core::clinical::states;
use clarity_core::eval::pairwise_metrics;
use clarity_core::gateway::{deserialize_response, serialize_response, ResultItem, SystemResponse};
use clarity_core::routing::{route, RoutingConfig, EXPLAIN_TAG, HYPOTHESES_TAG, SPECIALIST_TAG};
use clarity_core::safety::pca_fit;
use clarity_core::text::TfIdf;
use clarity_core::transcript::Transcript;
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["head", "pain", "neck", "fever", "cough", "back", "sleep", "tired", "the", "my"])
        .prop_map(str::to_string)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..8).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_metrics_are_bounded(
        rows in prop::collection::vec(
            (prop::collection::vec("[a-c]", 3), prop::collection::vec("[a-c]", 3)),
            1..20,
        )
    ) {
        let (alg, exp): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let m = pairwise_metrics(&alg, &exp, 3).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.precision));
        prop_assert!((0.0..=1.0).contains(&m.recall));
        // Any match makes chi one, and a single match contributes at least 1/k^2.
        prop_assert!(m.precision * 9.0 + 1e-12 >= m.recall);
    }

    #[test]
    fn tfidf_rows_are_unit_or_zero(docs in prop::collection::vec(sentence(), 1..12), probe in sentence()) {
        let model = TfIdf::fit(&docs, 1);
        let v = model.transform(&probe);
        prop_assert_eq!(v.len(), model.dim());
        prop_assert!(v.iter().all(|x| *x >= 0.0));
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_projection_round_trips_in_span(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 2..10)
    ) {
        let n_c = rows.len().min(4) - 1;
        prop_assume!(n_c > 0);
        let Ok(p) = pca_fit(&rows, n_c) else { return Ok(()) };
        for b in &p.basis {
            let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-8);
        }
        // Projecting a reconstruction gives the same coordinates back.
        let z = p.project(&rows[0]);
        let back: Vec<f64> = p.reconstruct_centered(&z).iter().zip(&p.mean).map(|(y, m)| y + m).collect();
        let z2 = p.project(&back);
        for (a, b) in z.iter().zip(&z2) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn response_serialization_is_idempotent(
        text in ".{0,40}",
        items in prop::collection::vec((".{0,12}", ".{0,12}", ".{0,30}"), 0..4)
    ) {
        let resp = SystemResponse {
            text,
            results: items
                .into_iter()
                .map(|(d, doc, desc)| ResultItem { diagnosis: d, doctor: doc, description: desc })
                .collect(),
        };
        let bytes = serialize_response(&resp);
        let parsed = deserialize_response(&bytes).unwrap();
        prop_assert_eq!(&parsed, &resp);
        prop_assert_eq!(serialize_response(&parsed), bytes);
    }

    #[test]
    fn routing_returns_requested_count(
        count in 1usize..5,
        names in prop::collection::vec("[A-Z][a-z]{2,8}", 1..12)
    ) {
        let stub = ScriptedStub::new("General practitioner")
            .rule(StubRule::on_tag(HYPOTHESES_TAG, names.join("\n")))
            .rule(StubRule::on_tag(SPECIALIST_TAG, "Neurologist"))
            .rule(StubRule::on_tag(EXPLAIN_TAG, "Because."));
        let mut history = Transcript::new();
        history.push_user("I have a headache.");
        let cfg = RoutingConfig { result_count: count, ..Default::default() };
        let distinct = names.iter().map(|n| n.to_lowercase()).collect::<std::collections::HashSet<_>>().len();
        match route(&stub, &history, &cfg) {
            Ok(r) => {
                prop_assert_eq!(r.triples.len(), count);
                prop_assert!(r.triples.iter().all(|t| !t.description.is_empty()));
            }
            Err(_) => prop_assert!(distinct < count),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Interleaving two sessions gives each the same replies as running it alone.
    #[test]
    fn sessions_are_isolated(
        a in prop::collection::vec(prop::sample::select(common::HEADACHE.to_vec()), 1..5),
        b in prop::collection::vec(prop::sample::select(common::SAFETY.to_vec()), 1..5),
        order in prop::collection::vec(any::<bool>(), 10)
    ) {
        let (solo, _) = common::demo_gateway();
        let (_, alone_a) = common::replay(&solo, "a", &a);
        let (_, alone_b) = common::replay(&solo, "b", &b);

        let (gw, _) = common::demo_gateway();
        gw.handle(&common::request("a", "")).unwrap();
        gw.handle(&common::request("b", "")).unwrap();
        let (mut got_a, mut got_b) = (Vec::new(), Vec::new());
        let (mut ia, mut ib) = (0, 0);
        for pick_a in order.iter().copied().chain(std::iter::repeat(true).take(a.len()))
            .chain(std::iter::repeat(false).take(b.len()))
        {
            if pick_a && ia < a.len() {
                got_a.push(serialize_response(&gw.handle(&common::request("a", a[ia])).unwrap().response));
                ia += 1;
            } else if !pick_a && ib < b.len() {
                got_b.push(serialize_response(&gw.handle(&common::request("b", b[ib])).unwrap().response));
                ib += 1;
            }
        }
        prop_assert_eq!(got_a, alone_a.into_iter().map(|t| t.body).collect::<Vec<_>>());
        prop_assert_eq!(got_b, alone_b.into_iter().map(|t| t.body).collect::<Vec<_>>());
    }

    /// Referrals only ever come from the routing state.
    #[test]
    fn results_imply_routing(
        msgs in prop::collection::vec(
            prop::sample::select(
                common::HEADACHE.iter().chain(&common::SAFETY).chain(&common::CRITICAL).copied().collect::<Vec<_>>()
            ),
            1..8
        )
    ) {
        let (gw, _) = common::demo_gateway();
        let (_, turns) = common::replay(&gw, "mixed", &msgs);
        for t in turns {
            prop_assert!(t.results.is_empty() || t.state == states::DIAGNOSTIC_ROUTING);
            prop_assert!(!t.text.is_empty());
        }
    }
}
