mod common;

use axum::http::StatusCode;
use common::{check_shape, endpoint_shapes, error_shape, fixture_state, get};
use deephys_core::synth::color_assignment;
use deephys_core::ShiftKind;

#[tokio::test]
async fn every_endpoint_matches_its_shape() {
    let state = fixture_state();
    for (uri, shape) in endpoint_shapes() {
        let reply = get(&state, uri).await;
        assert_eq!(reply.status, StatusCode::OK, "{uri}");
        assert!(reply.content_type.starts_with("application/json"), "{uri}");
        check_shape(&reply.json(), &shape, uri).unwrap();
    }
}

#[tokio::test]
async fn repeated_requests_are_byte_identical() {
    let state = fixture_state();
    for (uri, _) in endpoint_shapes() {
        let a = get(&state, uri).await;
        let b = get(&state, uri).await;
        assert_eq!(a.bytes, b.bytes, "{uri}");
    }
}

#[tokio::test]
async fn neuron_top_lists_nine_images() {
    let state = fixture_state();
    let body = get(&state, "/api/v1/neurons/7/top?dataset=ood0&k=9").await.json();
    assert_eq!(body["neuron_id"], 7);
    let datasets = body["datasets"].as_array().unwrap();
    assert_eq!(datasets.len(), 1);
    assert_eq!(datasets[0]["dataset"], "ood0");
    let images = datasets[0]["images"].as_array().unwrap();
    assert_eq!(images.len(), 9);
    let scores: Vec<f64> = images.iter().map(|i| i["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    // permuted OOD: neuron 7 fires on images whose colour is 7, i.e. category sigma^-1(7)
    let sigma = color_assignment(&common::spec(ShiftKind::Permuted)).colors;
    let source = sigma.iter().position(|&s| s == 7).unwrap() as u64;
    for image in images {
        assert_eq!(image["image_id"].as_u64().unwrap() / 30, source);
    }
}

#[tokio::test]
async fn top_without_dataset_covers_all_datasets() {
    let state = fixture_state();
    let body = get(&state, "/api/v1/neurons/3/top").await.json();
    let ids: Vec<&str> = body["datasets"].as_array().unwrap().iter().map(|d| d["dataset"].as_str().unwrap()).collect();
    assert_eq!(ids, ["ind", "ood0", "ood1"]);
    for d in body["datasets"].as_array().unwrap() {
        assert_eq!(d["images"].as_array().unwrap().len(), 9);
    }
}

#[tokio::test]
async fn image_view_shows_ind_companions() {
    let state = fixture_state();
    let sigma = color_assignment(&common::spec(ShiftKind::Permuted)).colors;
    // an OOD image of category 4 whose colour is sigma(4)
    let body = get(&state, "/api/v1/images/125/neurons?dataset=ood0&limit=3&k=5").await.json();
    assert_eq!(body["label"], 4);
    assert_eq!(body["prediction"], sigma[4]);
    assert_eq!(body["companion_dataset"], "ind");
    let neurons = body["neurons"].as_array().unwrap();
    assert_eq!(neurons.len(), 3);
    for n in neurons {
        assert_eq!(n["neuron_id"].as_u64().unwrap() % 10, sigma[4] as u64);
        let companion = n["companion"].as_array().unwrap();
        assert_eq!(companion.len(), 5);
        for image in companion {
            assert_eq!(image["image_id"].as_u64().unwrap() / 30, sigma[4] as u64);
        }
    }
}

#[tokio::test]
async fn category_defaults_and_confusion_pair() {
    let state = fixture_state();
    let default = get(&state, "/api/v1/categories/2/neurons").await.bytes;
    let explicit = get(&state, "/api/v1/categories/2/neurons?dataset=ind").await.bytes;
    assert_eq!(default, explicit);

    let sigma = color_assignment(&common::spec(ShiftKind::Permuted)).colors;
    let uri = format!("/api/v1/categories/0/neurons?dataset=ood0&b={}", sigma[0]);
    let body = get(&state, &uri).await.json();
    assert_eq!(body["pair_category"], sigma[0]);
    let ids = body["image_ids"].as_array().unwrap();
    assert!(ids.len() >= 30, "all of category 0 is predicted as sigma(0)");
    assert!(!body["neurons"].as_array().unwrap().is_empty());

    // identity OOD has no confusions between distinct categories
    let body = get(&state, "/api/v1/categories/0/neurons?dataset=ood1&b=1").await.json();
    assert!(body["image_ids"].as_array().unwrap().is_empty());
    assert!(body["neurons"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn confusions_are_symmetric() {
    let state = fixture_state();
    let ab = get(&state, "/api/v1/confusions?a=1&b=6&dataset=ood0").await.json();
    let ba = get(&state, "/api/v1/confusions?a=6&b=1&dataset=ood0").await.json();
    assert_eq!(ab["image_ids"], ba["image_ids"]);
}

#[tokio::test]
async fn thumbnails_are_png() {
    let state = fixture_state();
    let reply = get(&state, "/api/v1/images/0/thumbnail?dataset=ood0").await;
    assert_eq!(reply.status, StatusCode::OK);
    assert_eq!(reply.content_type, "image/png");
    assert_eq!(&reply.bytes[..8], b"\x89PNG\r\n\x1a\n");
    let missing = get(&state, "/api/v1/images/9999/thumbnail").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.error_code(), "not_found");
}

#[tokio::test]
async fn metrics_report_densities() {
    let state = fixture_state();
    let spurious = get(&state, "/api/v1/metrics/spurious?ood=ood0").await.json();
    assert_eq!(spurious["metric"], "spurious");
    assert_eq!(spurious["count"], 23);
    assert_eq!(spurious["density"].as_array().unwrap().len(), 128);
    let excluded = spurious["excluded_neurons"].as_array().unwrap();
    assert_eq!(excluded.len(), 1);
    assert_eq!(excluded[0]["neuron_id"], 5);
    assert_eq!(excluded[0]["reason"], "dead");

    // identity OOD: no novelty is retained, so there is no curve to draw
    let novelty = get(&state, "/api/v1/metrics/novelty?ood=ood1").await.json();
    assert_eq!(novelty["count"], 0);
    assert!(novelty["density"].is_null());
    assert_eq!(novelty["density_error"]["code"], "insufficient_data");
}

#[tokio::test]
async fn error_codes() {
    let state = fixture_state();
    let cases = [
        ("/api/v1/neurons/5/top", StatusCode::UNPROCESSABLE_ENTITY, "dead_neuron"),
        ("/api/v1/neurons/24/top", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/neurons/7/top?dataset=ood9", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/images/300/neurons", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/categories/10/neurons", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/categories/zebra/neurons", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/metrics/novelty?ood=ood2", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/metrics/novelty?ood=ind", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/nope", StatusCode::NOT_FOUND, "not_found"),
        ("/api/v1/neurons/7/top?k=0", StatusCode::BAD_REQUEST, "bad_request"),
        ("/api/v1/neurons/7/top?k=many", StatusCode::BAD_REQUEST, "bad_request"),
        ("/api/v1/neurons/x/top", StatusCode::BAD_REQUEST, "bad_request"),
        ("/api/v1/images/1/neurons?dataset=train", StatusCode::BAD_REQUEST, "bad_request"),
        ("/api/v1/confusions?a=1", StatusCode::BAD_REQUEST, "bad_request"),
    ];
    for (uri, status, code) in cases {
        let reply = get(&state, uri).await;
        assert_eq!(reply.status, status, "{uri}");
        check_shape(&reply.json(), &error_shape(), uri).unwrap();
        assert_eq!(reply.error_code(), code, "{uri}");
    }
}

#[tokio::test]
async fn neuron_listing_flags_dead() {
    let state = fixture_state();
    let body = get(&state, "/api/v1/neurons").await.json();
    assert_eq!(body["neuron_count"], 24);
    let neurons = body["neurons"].as_array().unwrap();
    assert_eq!(neurons[5]["dead"], true);
    assert_eq!(neurons[5]["ind_max"], 0.0);
    assert!(neurons[5]["activation_ratios"].as_array().unwrap().is_empty());
    assert_eq!(neurons[6]["dead"], false);
    assert_eq!(neurons[6]["activation_ratios"].as_array().unwrap().len(), 2);
}
