mod common;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{train_on, write_noisy_dataset, NOISY};
use gcbm::intervene::{edit_concept_vector, preview_plan, InterventionParams, InterventionPlan};
use gcbm_cli::args::{CheckpointArgs, SplitChoice};
use gcbm_cli::commands::intervene_workspace;
use gcbm_cli::server::{router, AppState, HASH_HEADER};
use gcbm_cli::workspace::Workspace;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn workspace(dir: &Path) -> Workspace {
    let trained = train_on(&write_noisy_dataset(dir), NOISY, &dir.join("run"));
    Workspace::load(&CheckpointArgs {
        checkpoint: trained.checkpoints[0].clone(),
        concepts: None,
        data_root: None,
    })
    .unwrap()
}

struct Reply {
    status: StatusCode,
    header_hash: Option<String>,
    body: Value,
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let header_hash = resp
        .headers()
        .get(HASH_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    Reply {
        status,
        header_hash,
        body,
    }
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None).await
}

async fn post(app: &Router, uri: &str, body: &Value) -> Reply {
    call(app, "POST", uri, Some(&body.to_string())).await
}

/// A single-concept plan with a non-empty target set on the training split.
fn working_plan(ws: &Workspace) -> InterventionPlan {
    let ids = ws.split_ids(SplitChoice::Train);
    let preds = ws.checkpoint.model.predict_many(&ws.graphs(ids));
    let (cls_true, cls_pred) = ids
        .iter()
        .zip(&preds)
        .find(|(&i, p)| p.class != ws.dataset.class_labels[i])
        .map(|(&i, p)| (ws.dataset.class_labels[i], p.class))
        .expect("noisy labels leave training errors");
    let params = InterventionParams {
        tau_c: 1e-6,
        margin: 0.2,
        cls_true,
        cls_pred,
    };
    let width = ws.checkpoint.model.shape.bottleneck_width();
    (0..width)
        .map(|j| InterventionPlan {
            concepts: vec![j],
            params,
        })
        .find(|plan| preview_plan(&ws.checkpoint.model, &ws.examples(ids), plan).is_ok())
        .expect("some concept has a usable activation")
}

#[tokio::test]
async fn read_endpoints_carry_the_checkpoint_hash() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let hash = ws.checkpoint_hash.clone();
    let app = router(AppState::new(ws.clone(), None));

    for uri in [
        "/api/meta",
        "/api/graphs",
        "/api/graphs/3",
        "/api/graphs/3?concept=0",
        "/api/concepts",
        "/api/weights",
        "/api/metrics",
    ] {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::OK, "{uri}: {}", r.body);
        assert_eq!(r.body["checkpoint_hash"], json!(hash), "{uri}");
        assert_eq!(r.header_hash.as_deref(), Some(hash.as_str()), "{uri}");
    }

    let meta = get(&app, "/api/meta").await.body;
    assert_eq!(meta["num_classes"], json!(2));
    assert_eq!(
        meta["bottleneck_width"],
        json!(ws.checkpoint.model.shape.bottleneck_width())
    );

    let graphs = get(&app, "/api/graphs").await.body;
    assert_eq!(graphs["graphs"].as_array().unwrap().len(), ws.dataset.len());

    let detail = get(&app, "/api/graphs/3").await.body;
    let direct = ws.checkpoint.model.predict(&ws.dataset.graphs[3]);
    assert_eq!(detail["prediction"], serde_json::to_value(&direct).unwrap());
    assert!(detail["highlight"].is_null());

    let concepts = get(&app, "/api/concepts").await.body;
    let list = concepts["concepts"].as_array().unwrap();
    assert_eq!(list.len(), ws.concepts.universe.total_width());
    assert_eq!(
        list[0]["gain"],
        json!(ws.concepts.universe.levels[0].selected.gains[0])
    );

    let weights = get(&app, "/api/weights").await.body;
    for class in weights["classes"].as_array().unwrap() {
        assert_eq!(class["flows"].as_array().unwrap().len(), 8);
        for f in class["flows"].as_array().unwrap() {
            let w = f["weight"].as_f64().unwrap();
            assert_eq!(f["width"].as_f64().unwrap(), w.abs().exp());
        }
    }

    let metrics = get(&app, "/api/metrics").await.body;
    assert!(metrics["test"]["accuracy"].as_f64().is_some());
    assert_eq!(metrics["interventions"], json!(0));
}

#[tokio::test]
async fn highlight_maps_concepts_to_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let app = router(AppState::new(ws.clone(), None));
    let width = ws.concepts.universe.total_width();
    for j in 0..width {
        let concept = ws.concepts.universe.concept(j).unwrap();
        let code = gcbm::wl::WlCode {
            code: concept.code.clone(),
            height: concept.level,
        };
        for id in [0usize, 1] {
            let r = get(&app, &format!("/api/graphs/{id}?concept={j}")).await;
            let nodes: Vec<usize> =
                serde_json::from_value(r.body["highlight"]["nodes"].clone()).unwrap();
            let expected: Vec<usize> =
                gcbm::interpret::map_concept_to_nodes(&ws.dataset.graphs[id], &ws.codes[id], &code)
                    .into_iter()
                    .collect();
            assert_eq!(nodes, expected);
        }
    }
    let r = get(&app, &format!("/api/graphs/0?concept={width}")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let hash = ws.checkpoint_hash.clone();
    let app = router(AppState::new(ws.clone(), None));

    let r = get(&app, "/api/graphs/100000").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.body["code"], json!("unknown_graph"));
    assert!(r.body["message"].is_string());
    assert!(r.body["fields"].is_array());
    assert_eq!(r.header_hash.as_deref(), Some(hash.as_str()));

    let r = get(&app, "/api/nothing").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    // wrong field type
    let r = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": {"concepts": "x"}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["code"], json!("malformed_body"));
    assert_eq!(r.body["fields"][0]["field"], json!("plan.concepts"));

    // missing field
    let r = post(&app, "/api/intervene/weights", &json!({"split": "test"})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.body["fields"][0]["message"]
        .as_str()
        .unwrap()
        .contains("plan"));

    // not JSON at all
    let r = call(&app, "POST", "/api/intervene/weights", Some("{oops")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["fields"].as_array().unwrap().len(), 1);

    // invalid parameters and concept indices
    let r = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": {"concepts": [0], "params": {"tau_c": 2.0}}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["fields"][0]["field"], json!("plan.params"));
    let r = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": {"concepts": [100000]}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["fields"][0]["field"], json!("plan.concepts"));
    let r = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": {"concepts": []}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    // predict needs exactly one of graph_id and graph
    let r = post(&app, "/api/predict", &json!({})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = post(&app, "/api/predict", &json!({"graph_id": 100000})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = post(
        &app,
        "/api/predict",
        &json!({"graph": {"num_nodes": 2, "edges": [[0, 5]], "node_labels": [0, 0]}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    // refusals are reported verbatim
    let refused = InterventionPlan {
        concepts: vec![0],
        params: InterventionParams {
            tau_c: 1.0,
            ..InterventionParams::default()
        },
    };
    let r = post(&app, "/api/intervene/weights", &json!({"plan": refused})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["code"], json!("empty_target_set"));

    // nothing applied, so nothing to revert
    let r = post(&app, "/api/revert", &json!({})).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(
        get(&app, "/api/meta").await.body["checkpoint_hash"],
        json!(hash)
    );
}

#[tokio::test]
async fn predict_and_what_if_match_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let app = router(AppState::new(ws.clone(), None));
    let graph = &ws.dataset.graphs[7];

    let by_id = post(&app, "/api/predict", &json!({"graph_id": 7})).await;
    assert_eq!(by_id.status, StatusCode::OK);
    let by_body = post(&app, "/api/predict", &json!({"graph": graph})).await;
    assert_eq!(by_body.status, StatusCode::OK);
    let direct = serde_json::to_value(ws.checkpoint.model.predict(graph)).unwrap();
    assert_eq!(by_id.body["prediction"], direct);
    assert_eq!(by_body.body["prediction"], direct);

    let truth = &ws.labels[7];
    let edits: Vec<(usize, f64)> = truth.iter().copied().enumerate().take(5).collect();
    let body = json!({
        "graph_id": 7,
        "edits": edits.iter().map(|&(index, value)| json!({"index": index, "value": value})).collect::<Vec<_>>(),
    });
    let r = post(&app, "/api/intervene/concepts", &body).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let engine = edit_concept_vector(&ws.checkpoint.model, graph, &edits).unwrap();
    assert_eq!(
        r.body["edited"]["logits"],
        serde_json::to_value(&engine.edited.logits).unwrap()
    );
    assert_eq!(
        r.body["original"],
        serde_json::to_value(&engine.original).unwrap()
    );
    // what-if edits never touch the served model
    assert_eq!(r.body["checkpoint_hash"], json!(ws.checkpoint_hash));
    assert_eq!(
        get(&app, "/api/meta").await.body["checkpoint_hash"],
        json!(ws.checkpoint_hash)
    );

    let r = post(
        &app,
        "/api/intervene/concepts",
        &json!({"graph_id": 7, "edits": [{"index": 100000, "value": 1.0}]}),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

fn all_weights(v: &Value) -> Vec<Vec<f64>> {
    v["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let mut flows: Vec<(String, usize, f64)> = c["flows"]
                .as_array()
                .unwrap()
                .iter()
                .map(|f| {
                    (
                        f["concept_code"].as_str().unwrap().to_string(),
                        f["level"].as_u64().unwrap() as usize,
                        f["weight"].as_f64().unwrap(),
                    )
                })
                .collect();
            flows.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
            flows.into_iter().map(|f| f.2).collect()
        })
        .collect()
}

#[tokio::test]
async fn preview_apply_revert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let out = dir.path().join("serve-out");
    let state = AppState::new(ws.clone(), Some(out.clone()));
    let app = router(state.clone());
    let h0 = ws.checkpoint_hash.clone();
    let plan = working_plan(&ws);
    let width = ws.checkpoint.model.shape.bottleneck_width();
    let before = ws.checkpoint.model.classifier().clone();

    let preview = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": plan, "split": "train", "preview_only": true}),
    )
    .await;
    assert_eq!(preview.status, StatusCode::OK, "{}", preview.body);
    let engine = preview_plan(
        &ws.checkpoint.model,
        &ws.examples(ws.split_ids(SplitChoice::Train)),
        &plan,
    )
    .unwrap();
    assert_eq!(
        preview.body["preview"],
        serde_json::to_value(&engine).unwrap()
    );
    assert_eq!(preview.body["checkpoint_hash"], json!(h0));

    let applied = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": plan, "split": "train", "expected_hash": h0}),
    )
    .await;
    assert_eq!(applied.status, StatusCode::OK, "{}", applied.body);
    let h1 = applied.body["checkpoint_hash"]
        .as_str()
        .unwrap()
        .to_string();
    assert_ne!(h1, h0);
    assert_eq!(applied.body["previous_hash"], json!(h0));
    assert_eq!(applied.body["transcript"]["new_checkpoint_hash"], json!(h1));
    assert_eq!(applied.header_hash.as_deref(), Some(h1.as_str()));
    let records = applied.body["transcript"]["records"].as_array().unwrap();
    assert_eq!(records[0]["delta_w"], json!(engine.adjustments[0].2));

    // exactly two classifier entries changed
    let after = state.snapshot().checkpoint.model.classifier().clone();
    let mut changed = Vec::new();
    for c in 0..before.num_classes {
        for j in 0..width {
            if before.weight_at(c, j) != after.weight_at(c, j) {
                changed.push((c, j));
            }
        }
    }
    let j = plan.concepts[0];
    assert_eq!(changed, {
        let mut v = vec![(plan.params.cls_true, j), (plan.params.cls_pred, j)];
        v.sort();
        v
    });

    // reads after the write see the new model
    let meta = get(&app, "/api/meta").await;
    assert_eq!(meta.body["checkpoint_hash"], json!(h1));
    assert_eq!(meta.body["revertible"], json!(1));
    let w = get(&app, &format!("/api/weights?top_t={width}")).await;
    assert_eq!(w.body["checkpoint_hash"], json!(h1));
    let flows = &w.body["classes"][plan.params.cls_true]["flows"];
    let edited = flows
        .as_array()
        .unwrap()
        .iter()
        .find(|f| {
            f["concept_code"] == json!(ws.concepts.universe.concept(j).unwrap().code)
                && f["level"] == json!(ws.concepts.universe.concept(j).unwrap().level)
        })
        .unwrap();
    assert_eq!(
        edited["weight"].as_f64().unwrap(),
        after.weight_at(plan.params.cls_true, j)
    );

    // the new state is persisted and loads back to the same hash
    let persisted = Workspace::load(&CheckpointArgs {
        checkpoint: out.join("checkpoint.json"),
        concepts: None,
        data_root: None,
    })
    .unwrap();
    assert_eq!(persisted.checkpoint_hash, h1);
    let log: Vec<gcbm::artifact::InterventionTranscript> =
        gcbm::artifact::read_json(&out.join("transcripts.json")).unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(state.transcripts(), log);

    // a stale hash is refused
    let stale = post(
        &app,
        "/api/intervene/weights",
        &json!({"plan": plan, "expected_hash": h0}),
    )
    .await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.body["code"], json!("stale_checkpoint"));

    let reverted = post(&app, "/api/revert", &json!({})).await;
    assert_eq!(reverted.status, StatusCode::OK);
    assert_eq!(reverted.body["checkpoint_hash"], json!(h0));
    assert_eq!(reverted.body["reverted_from"], json!(h1));
    assert_eq!(
        get(&app, "/api/meta").await.body["checkpoint_hash"],
        json!(h0)
    );
    assert_eq!(state.snapshot().checkpoint.model.classifier(), &before);
    let persisted = Workspace::load(&CheckpointArgs {
        checkpoint: out.join("checkpoint.json"),
        concepts: None,
        data_root: None,
    })
    .unwrap();
    assert_eq!(persisted.checkpoint_hash, h0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_reads_see_one_consistent_model() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let plan = working_plan(&ws);
    let width = ws.checkpoint.model.shape.bottleneck_width();
    let (_, applied) = intervene_workspace(&ws, &plan, SplitChoice::Train).unwrap();
    let next = ws.with_checkpoint(applied.unwrap()).unwrap();

    // expected weight payload per checkpoint hash
    let mut expected: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for w in [&ws, &next] {
        let app = router(AppState::new(w.clone(), None));
        let body = get(&app, &format!("/api/weights?top_t={width}")).await.body;
        expected.insert(w.checkpoint_hash.clone(), all_weights(&body));
    }
    let expected = Arc::new(expected);

    let app = router(AppState::new(ws.clone(), None));
    let mut readers = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        let expected = expected.clone();
        readers.push(tokio::spawn(async move {
            let mut seen = Vec::new();
            for _ in 0..25 {
                let r = get(&app, &format!("/api/weights?top_t={width}")).await;
                let hash = r.body["checkpoint_hash"].as_str().unwrap().to_string();
                assert_eq!(r.header_hash.as_deref(), Some(hash.as_str()));
                let want = expected.get(&hash).expect("hash of a known model");
                assert_eq!(&all_weights(&r.body), want);
                seen.push(hash);
            }
            seen
        }));
    }
    for _ in 0..5 {
        let r = post(
            &app,
            "/api/intervene/weights",
            &json!({"plan": plan, "split": "train"}),
        )
        .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        assert_eq!(r.body["checkpoint_hash"], json!(next.checkpoint_hash));
        let r = post(&app, "/api/revert", &json!({})).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.body["checkpoint_hash"], json!(ws.checkpoint_hash));
    }
    for reader in readers {
        let seen = reader.await.unwrap();
        assert_eq!(seen.len(), 25);
    }
}
