//! Remote backend behavior against a local scripted HTTP server: retry
//! policy, error surfacing, and response caches that make reruns hermetic.

mod common;

use common::{chat_response, embedding_response, MockServer, API_KEY, API_KEY_ENV};
use querytrack_core::caption::{CaptionRequest, PromptTemplate, RemoteCaptioner};
use querytrack_core::matching::{RemoteEncoder, TextEncoder};
use querytrack_core::remote::RemoteEndpoint;
use querytrack_core::Error;

fn endpoint(url: String) -> RemoteEndpoint {
    RemoteEndpoint {
        endpoint: url,
        model: "mock-model".into(),
        api_key_env: API_KEY_ENV.into(),
        max_retries: 3,
        backoff_ms: 1,
        timeout_s: 10,
    }
}

#[test]
fn retryable_status_is_retried_with_the_same_payload() {
    let server = MockServer::scripted(vec![
        (429, "{\"error\":\"slow down\"}".into()),
        (200, chat_response("a black car, moving, on the left")),
    ]);
    let ep = endpoint(server.url());
    let body = serde_json::json!({"model": "mock-model", "messages": []});
    let resp = ep.post_json("chat/completions", &body).unwrap();
    assert_eq!(
        resp.pointer("/choices/0/message/content").and_then(|v| v.as_str()),
        Some("a black car, moving, on the left")
    );

    let requests = server.requests();
    assert_eq!(requests.len(), 2, "one retry after the 429");
    assert_eq!(requests[0].body, requests[1].body);
    assert_eq!(requests[0].path, "/v1/chat/completions");
    for r in &requests {
        assert_eq!(r.auth.as_deref(), Some(format!("Bearer {API_KEY}").as_str()));
    }
}

#[test]
fn non_retryable_status_surfaces_immediately() {
    let server = MockServer::scripted(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let ep = endpoint(server.url());
    let err = ep
        .post_json("chat/completions", &serde_json::json!({}))
        .unwrap_err();
    match err {
        Error::Remote { status, body } => {
            assert_eq!(status, 401);
            assert!(body.contains("bad key"), "{body}");
        }
        other => panic!("expected Remote error, got {other:?}"),
    }
    assert_eq!(server.hits(), 1, "401 must not be retried");
}

#[test]
fn exhausted_retries_report_the_attempt_count() {
    let server = MockServer::scripted(vec![
        (500, "{}".into()),
        (503, "{}".into()),
        (500, "{}".into()),
    ]);
    let mut ep = endpoint(server.url());
    ep.max_retries = 2;
    let err = ep
        .post_json("chat/completions", &serde_json::json!({}))
        .unwrap_err();
    match err {
        Error::RemoteExhausted { attempts, .. } => assert_eq!(attempts, 3),
        other => panic!("expected RemoteExhausted, got {other:?}"),
    }
    assert_eq!(server.hits(), 3);
}

#[test]
fn malformed_success_body_counts_as_retryable() {
    let server = MockServer::scripted(vec![
        (200, "this is not json".into()),
        (200, chat_response("a van, stationary, on the right")),
    ]);
    let ep = endpoint(server.url());
    let resp = ep
        .post_json("chat/completions", &serde_json::json!({}))
        .unwrap();
    assert!(resp.pointer("/choices/0/message/content").is_some());
    assert_eq!(server.hits(), 2);
}

fn caption_request(descriptor_text: &str) -> CaptionRequest {
    CaptionRequest {
        class: "car".into(),
        descriptor_text: descriptor_text.into(),
        window: 5,
        image_png: None,
    }
}

#[test]
fn captioner_cache_survives_across_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("captions.jsonl");
    let server = MockServer::scripted(vec![(200, chat_response("a red car, turning, ahead"))]);

    let captioner = RemoteCaptioner::new(
        endpoint(server.url()),
        PromptTemplate::default(),
        Some(cache.clone()),
        2,
    )
    .unwrap();
    let req = caption_request("pos_m=[5.00,1.00,0.00]");
    let (text, key) = captioner.caption(&req).unwrap();
    assert_eq!(text, "a red car, turning, ahead");
    captioner.flush_cache().unwrap();
    assert_eq!(server.hits(), 1);

    // A fresh captioner over the same cache file answers without the network:
    // the script is exhausted, so any request would come back as a 500.
    let reloaded = RemoteCaptioner::new(
        endpoint(server.url()),
        PromptTemplate::default(),
        Some(cache),
        2,
    )
    .unwrap();
    let (text2, key2) = reloaded.caption(&req).unwrap();
    assert_eq!(text2, text);
    assert_eq!(key2, key);
    assert_eq!(server.hits(), 1, "cache hit must not touch the server");
}

#[test]
fn caption_batch_preserves_request_order_under_concurrency() {
    // Router answers each chat request by echoing the descriptor marker it
    // finds in the user prompt, so replies identify their request.
    let server = MockServer::start(Box::new(|_path, body| {
        let user = body
            .pointer("/messages/1/content")
            .and_then(|v| v.as_str())
            .unwrap_or("");
        let marker = (0..8)
            .map(|i| format!("desc-{i}"))
            .find(|m| user.contains(m.as_str()))
            .unwrap_or_else(|| "unknown".into());
        (200, chat_response(&format!("echo {marker}")))
    }));
    let captioner = RemoteCaptioner::new(
        endpoint(server.url()),
        PromptTemplate::default(),
        None,
        3,
    )
    .unwrap();
    let requests: Vec<CaptionRequest> = (0..8).map(|i| caption_request(&format!("desc-{i}"))).collect();
    let out = captioner.caption_all(&requests).unwrap();
    assert_eq!(out.len(), 8);
    for (i, (text, _)) in out.iter().enumerate() {
        assert_eq!(text, &format!("echo desc-{i}"));
    }
    assert_eq!(server.hits(), 8);
}

#[test]
fn encoder_cache_hits_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("embeddings.jsonl");
    let server = MockServer::scripted(vec![(200, embedding_response(&[3.0, 4.0]))]);

    let encoder = RemoteEncoder::new(endpoint(server.url()), Some(cache.clone())).unwrap();
    let v = encoder.embed("black car").unwrap();
    assert!((v.0[0] - 0.6).abs() < 1e-12, "vectors are unit-normalized");
    assert!((v.0[1] - 0.8).abs() < 1e-12);
    encoder.flush().unwrap();
    assert_eq!(server.hits(), 1);

    let reloaded = RemoteEncoder::new(endpoint(server.url()), Some(cache)).unwrap();
    let v2 = reloaded.embed("black car").unwrap();
    assert_eq!(v.0, v2.0);
    assert_eq!(server.hits(), 1, "cache hit must not touch the server");
}

#[test]
fn validate_rejects_missing_key_env() {
    common::init_env();
    let mut ep = endpoint("http://127.0.0.1:9/v1".into());
    ep.api_key_env = "QUERYTRACK_TEST_KEY_THAT_IS_NOT_SET".into();
    let err = ep.validate().unwrap_err();
    assert!(err.is_input_error());
    assert!(err.to_string().contains("QUERYTRACK_TEST_KEY_THAT_IS_NOT_SET"));
}
