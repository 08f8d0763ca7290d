#![cfg(feature = "net")]

mod common;

use std::sync::{Arc, RwLock};

use serde_json::{json, Value};
use webextractor_core::kg::{EntityId, PropertyId};
use webextractor_core::proposals::{Evidence, FactProposal, ProposalStore, ProposedObject};
use webextractor_core::server::{spawn, ServerHandle};

use common::{get_json, post_json};

fn proposal(subject: &str, property: &str, object: ProposedObject, start: usize) -> FactProposal {
    FactProposal::pending(
        EntityId::new(subject).unwrap(),
        PropertyId::new(property).unwrap(),
        PropertyId::new("P434").unwrap(),
        object,
        Evidence {
            source_url: format!("https://musicbrainz.org/artist/{subject}"),
            raw_byte_range: 347..351,
            clean_span: start..start + 4,
            text: "1997".into(),
            snapshot_hash: "ab".repeat(32),
            retrieved_at: "2026-03-01T12:00:00Z".parse().unwrap(),
        },
        1.0,
        None,
    )
}

fn deskadena() -> FactProposal {
    proposal(
        "Q113585063",
        "P571",
        ProposedObject::Literal {
            value: "1997".into(),
            datatype: Some("time".into()),
        },
        164,
    )
}

fn server() -> (ServerHandle, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let store = ProposalStore::open(dir.path().join("store")).unwrap();
    (spawn(Arc::new(RwLock::new(store)), "127.0.0.1:0".parse().unwrap()).unwrap(), dir)
}

fn three() -> Vec<FactProposal> {
    vec![
        deskadena(),
        proposal("Q994013", "P108", ProposedObject::Entity { id: EntityId::new("Q31519").unwrap() }, 10),
        proposal("Q994013", "P69", ProposedObject::Unlinked { text: "Charles".into() }, 20),
    ]
}

fn ids() -> [String; 3] {
    let v: Vec<String> = three().into_iter().map(|p| p.id).collect();
    v.try_into().unwrap()
}

#[test]
fn submit_list_and_page() {
    let (srv, _dir) = server();
    let base = srv.base_url();

    let (status, body) = post_json(&format!("{base}/proposals"), &json!({ "proposals": three() }), &[]);
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["data"]["accepted"], 3);

    // bare array, all duplicates
    let (status, body) = post_json(&format!("{base}/proposals"), &serde_json::to_value(three()).unwrap(), &[]);
    assert_eq!(status, 200);
    assert_eq!(body["data"]["accepted"], 0);
    assert_eq!(body["data"]["duplicates"], 3);

    let (_, body) = get_json(&format!("{base}/proposals?status=pending"));
    assert_eq!(body["data"].as_array().unwrap().len(), 3);
    assert!(body.get("next_cursor").is_none());

    let (_, body) = get_json(&format!("{base}/proposals?subject=Q994013"));
    let items = body["data"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert!(items.iter().all(|p| p["subject"] == "Q994013"));

    let (_, first) = get_json(&format!("{base}/proposals?limit=2"));
    let cursor = first["next_cursor"].as_str().expect("cursor").to_string();
    let (_, second) = get_json(&format!("{base}/proposals?limit=2&cursor={cursor}"));
    let ids = |v: &Value| -> Vec<String> {
        v["data"].as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap().to_string()).collect()
    };
    let (a, b) = (ids(&first), ids(&second));
    assert_eq!((a.len(), b.len()), (2, 1));
    assert!(a.iter().all(|id| !b.contains(id)));
    assert!(second.get("next_cursor").is_none());

    let (status, body) = get_json(&format!("{base}/health"));
    assert_eq!(status, 200);
    assert_eq!(body, json!({ "data": { "status": "ok", "proposals": 3 } }));
}

#[test]
fn decisions_and_errors() {
    let (srv, _dir) = server();
    let base = srv.base_url();
    post_json(&format!("{base}/proposals"), &json!({ "proposals": three() }), &[]);
    let [desk, employer, unlinked] = ids();

    let (status, body) = post_json(
        &format!("{base}/proposals/{desk}/decision"),
        &json!({ "action": "approve", "reviewer": "ann" }),
        &[],
    );
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["data"]["status"], "approved");
    assert_eq!(body["data"]["reviewer"], "ann");

    // second decision loses
    let (status, body) = post_json(
        &format!("{base}/proposals/{desk}/decision"),
        &json!({ "action": "reject", "reviewer": "bob" }),
        &[],
    );
    assert_eq!(status, 409);
    assert_eq!(body["error"]["code"], "conflict");

    // reviewer from header, note persisted
    let (status, body) = post_json(
        &format!("{base}/proposals/{employer}/decision"),
        &json!({ "action": "reject", "note": "wrong department" }),
        &[("X-Reviewer", "carol")],
    );
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["data"]["reviewer"], "carol");
    assert_eq!(body["data"]["note"], "wrong department");

    let (status, body) = post_json(
        &format!("{base}/proposals/{unlinked}/decision"),
        &json!({ "action": "approve", "reviewer": "ann" }),
        &[],
    );
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "invalid_request");

    let (status, _) = post_json(&format!("{base}/proposals/{unlinked}/decision"), &json!({ "action": "approve" }), &[]);
    assert_eq!(status, 400);
    let (status, _) = post_json(&format!("{base}/proposals/{unlinked}/decision"), &json!({ "action": "maybe", "reviewer": "x" }), &[]);
    assert_eq!(status, 400);

    let (status, body) = get_json(&format!("{base}/proposals/nope"));
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "not_found");
    let (status, body) = get_json(&format!("{base}/no/such/route"));
    assert_eq!(status, 404);
    assert!(body["error"]["message"].is_string());
    let (status, _) = get_json(&format!("{base}/proposals?status=unknown"));
    assert_eq!(status, 400);

    let (_, body) = get_json(&format!("{base}/proposals/{desk}"));
    assert_eq!(body["data"]["status"], "approved");
}

#[test]
fn invalid_items_are_reported_per_item() {
    let (srv, _dir) = server();
    let base = srv.base_url();
    let mut approved = deskadena();
    approved.status = webextractor_core::proposals::Status::Approved;
    let mut forged = three().remove(1);
    forged.id = "forged".into();
    let (status, body) = post_json(
        &format!("{base}/proposals"),
        &json!({ "proposals": [approved, forged, three()[2].clone()] }),
        &[],
    );
    assert_eq!(status, 200);
    assert_eq!(body["data"]["accepted"], 1);
    assert_eq!(body["data"]["rejected"].as_array().unwrap().len(), 2);

    let (status, body) = post_json(&format!("{base}/proposals"), &json!({ "wrong": 1 }), &[]);
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "invalid_request");
}

#[test]
fn export_formats() {
    let (srv, _dir) = server();
    let base = srv.base_url();

    let (status, body) = get_json(&format!("{base}/export?format=json"));
    assert_eq!(status, 200);
    assert_eq!(body["data"]["format"], "webextractor-statements");
    assert_eq!(body["data"]["statements"], json!([]));

    post_json(&format!("{base}/proposals"), &json!({ "proposals": three() }), &[]);
    let [desk, employer, _] = ids();
    post_json(&format!("{base}/proposals/{desk}/decision"), &json!({ "action": "approve", "reviewer": "ann" }), &[]);
    post_json(&format!("{base}/proposals/{employer}/decision"), &json!({ "action": "reject", "reviewer": "ann" }), &[]);

    let (_, body) = get_json(&format!("{base}/export?format=json"));
    let statements = body["data"]["statements"].as_array().unwrap();
    assert_eq!(statements.len(), 1);
    assert_eq!(statements[0]["subject"], "Q113585063");
    assert_eq!(statements[0]["reference"]["url"], "https://musicbrainz.org/artist/Q113585063");

    let (status, body) = get_json(&format!("{base}/export?format=quickstatements"));
    assert_eq!(status, 200);
    let text = body["data"].as_str().unwrap();
    assert_eq!(
        text.trim_end(),
        "Q113585063\tP571\t+1997-00-00T00:00:00Z/9\tS854\t\"https://musicbrainz.org/artist/Q113585063\"\tS813\t+2026-03-01T00:00:00Z/11"
    );

    let (status, _) = get_json(&format!("{base}/export?format=xml"));
    assert_eq!(status, 400);
}
