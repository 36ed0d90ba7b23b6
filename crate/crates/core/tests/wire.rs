use std::time::Duration;

use hasoc_core::embedkit::mock::{MockConfig, MockServer};
use hasoc_core::embedkit::{hash_embed, EmbedError, Embedder, EmbeddingBackendSpec, RetryPolicy};

const FAST: RetryPolicy = RetryPolicy {
    max_attempts: 3,
    base_delay: Duration::from_millis(5),
};

fn client(server: &MockServer, model: &str, dim: usize, max_batch: usize) -> Embedder {
    let mut spec = EmbeddingBackendSpec::remote(server.url(), model, dim);
    spec.max_batch = max_batch;
    Embedder::new(spec).unwrap().with_retry(FAST)
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("post {i} नमस्ते 😂")).collect()
}

#[test]
fn chunked_requests_come_back_in_order() {
    let server = MockServer::start(MockConfig {
        latency: Duration::from_millis(20),
        ..MockConfig::default()
    })
    .unwrap();
    let input = texts(23);
    let got = client(&server, "xlmr", 8, 4).embed_batch(&input).unwrap();
    assert_eq!(got.len(), 23);
    for (t, v) in input.iter().zip(&got) {
        assert_eq!(v.values, hash_embed(t, 8, 0).values);
    }
    assert_eq!(server.embed_requests(), 6);
    assert!(server.max_in_flight() >= 2, "requests were serialised");
    assert!(server.max_in_flight() <= 4);
}

#[test]
fn empty_input_sends_nothing() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let none: [&str; 0] = [];
    assert!(client(&server, "xlmr", 8, 4)
        .embed_batch(&none)
        .unwrap()
        .is_empty());
    assert_eq!(server.embed_requests(), 0);
}

#[test]
fn reported_dimension_is_checked() {
    let server = MockServer::start(MockConfig {
        reported_dim: Some(16),
        ..MockConfig::default()
    })
    .unwrap();
    let r = client(&server, "xlmr", 8, 4).embed_batch(&texts(2));
    assert!(
        matches!(
            r,
            Err(EmbedError::DimMismatch {
                expected: 8,
                found: 16
            })
        ),
        "{r:?}"
    );
}

#[test]
fn transient_failures_are_retried() {
    let server = MockServer::start(MockConfig {
        fail_first: 2,
        ..MockConfig::default()
    })
    .unwrap();
    let got = client(&server, "xlmr", 8, 64)
        .embed_batch(&texts(3))
        .unwrap();
    assert_eq!(got.len(), 3);
    assert_eq!(server.embed_requests(), 3);
}

#[test]
fn persistent_failure_gives_up_after_policy() {
    let server = MockServer::start(MockConfig {
        always_fail: true,
        ..MockConfig::default()
    })
    .unwrap();
    let r = client(&server, "xlmr", 8, 64).embed_batch(&texts(1));
    match r {
        Err(EmbedError::ServiceUnavailable {
            attempts,
            last_error,
        }) => {
            assert_eq!(attempts, 3);
            assert!(last_error.contains("503"), "{last_error}");
        }
        other => panic!("expected ServiceUnavailable, got {other:?}"),
    }
    assert_eq!(server.embed_requests(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let r = client(&server, "labse", 8, 64).embed_batch(&texts(1));
    assert!(
        matches!(r, Err(EmbedError::ServiceError { status: 404, .. })),
        "{r:?}"
    );
    assert_eq!(server.embed_requests(), 1);

    let small = MockServer::start(MockConfig {
        max_batch: 2,
        ..MockConfig::default()
    })
    .unwrap();
    let r = client(&small, "xlmr", 8, 5).embed_batch(&texts(5));
    assert!(
        matches!(r, Err(EmbedError::ServiceError { status: 413, .. })),
        "{r:?}"
    );
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let server = MockServer::start(MockConfig {
        malformed: true,
        ..MockConfig::default()
    })
    .unwrap();
    let r = client(&server, "xlmr", 8, 64).embed_batch(&texts(1));
    assert!(matches!(r, Err(EmbedError::ProtocolError(_))), "{r:?}");
}

#[test]
fn health_lists_models() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let e = client(&server, "xlmr", 8, 64);
    let h = e.remote().unwrap().health().unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.models, vec!["xlmr".to_string()]);

    let loading = MockServer::start(MockConfig {
        ready: false,
        ..MockConfig::default()
    })
    .unwrap();
    let r = client(&loading, "xlmr", 8, 64).remote().unwrap().health();
    assert!(
        matches!(r, Err(EmbedError::ServiceError { status: 503, .. })),
        "{r:?}"
    );
}

#[test]
fn unreachable_service_is_unavailable() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let url = server.url();
    drop(server);
    let spec = EmbeddingBackendSpec::remote(url, "xlmr", 8);
    let r = Embedder::new(spec)
        .unwrap()
        .with_retry(FAST)
        .embed_batch(&texts(1));
    assert!(
        matches!(r, Err(EmbedError::ServiceUnavailable { attempts: 3, .. })),
        "{r:?}"
    );
}

#[test]
fn cache_avoids_repeat_requests() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockConfig::default()).unwrap();
    let input = texts(5);
    let first = client(&server, "xlmr", 8, 64)
        .with_cache(dir.path().join("c.jsonl"))
        .unwrap();
    let a = first.embed_batch(&input).unwrap();
    first.flush_cache().unwrap();
    let before = server.embed_requests();

    let second = client(&server, "xlmr", 8, 64)
        .with_cache(dir.path().join("c.jsonl"))
        .unwrap();
    let b = second.embed_batch(&input).unwrap();
    assert_eq!(a, b);
    assert_eq!(server.embed_requests(), before);
}
