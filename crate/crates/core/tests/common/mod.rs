#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::routing::post;
use axum::{Json, Router};
use proptest::prelude::*;
use webextractor_core::config::Config;
use webextractor_core::extract::{wire, ExtractionQuery, ExtractorBackend, RuleBackend};
use webextractor_core::html::{CleanDocument, TagPolicy};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// The bundled fixture config, writing into `work`.
pub fn fixture_config(work: &Path) -> Config {
    let mut cfg = Config::load(&fixtures_dir().join("webextractor.toml")).expect("fixture config");
    cfg.work_dir = work.to_path_buf();
    cfg
}

pub const SECRET: &str = "SECRETPAYLOAD";

/// Messy HTML: unbalanced tags, entities, comments, and removed elements
/// whose content is [`SECRET`].
pub fn random_html() -> impl Strategy<Value = String> {
    let word = "[a-z]{1,7}".prop_map(|w| format!("{w} "));
    let space = prop::sample::select(vec![" ", "\n  ", "\t", "  "]).prop_map(String::from);
    let entity = prop::sample::select(vec![
        "&amp;", "&lt;", "&gt;", "&quot;", "&nbsp;", "&#65;", "&#x42;", "&eacute;", "&bogus;", "é", "ü", "→", "&",
    ])
    .prop_map(String::from);
    let tags = vec!["div", "p", "h1", "h3", "ul", "li", "span", "a", "b", "table", "td", "section", "dd"];
    let open = (prop::sample::select(tags.clone()), any::<bool>()).prop_map(|(t, attr)| {
        if attr {
            format!("<{t} class=\"c {SECRET}\" data-x='1 > 0'>")
        } else {
            format!("<{t}>")
        }
    });
    let close = prop::sample::select(tags).prop_map(|t| format!("</{t}>"));
    let hidden = prop::sample::select(vec![
        format!("<script>var s = \"{SECRET}\"; if (a < b) {{ x = '</div>'; }}</script>"),
        format!("<style>.{SECRET} {{ color: red; }}</style>"),
        format!("<img src=\"{SECRET}.png\" alt=\"{SECRET}\">"),
        format!("<SCRIPT type=\"text/javascript\">{SECRET}</SCRIPT>"),
        format!("<img src={SECRET}.png />"),
        format!("<!-- {SECRET} -->"),
        format!("<!---->"),
        format!("<br>"),
    ]);
    let piece = prop_oneof![
        6 => word,
        2 => space,
        2 => entity,
        3 => open,
        2 => close,
        2 => hidden,
    ];
    (prop::collection::vec(piece, 0..60), any::<bool>()).prop_map(|(pieces, wrap)| {
        let body = pieces.concat();
        if wrap {
            format!("<!DOCTYPE html><html><head><title>t</title><script>{SECRET}</script></head><body>{body}</body></html>")
        } else {
            body
        }
    })
}

/// Serves `POST /extract` by running `backend` on clean-text contexts.
pub struct StubExtractor {
    pub addr: SocketAddr,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

impl StubExtractor {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

pub fn stub_extractor(backend: RuleBackend) -> StubExtractor {
    let backend = Arc::new(backend);
    serve_stub(Router::new().route(
        "/extract",
        post(move |Json(req): Json<wire::Request>| {
            let backend = backend.clone();
            async move {
                let policy = TagPolicy::default();
                let queries: Vec<ExtractionQuery> = req
                    .queries
                    .iter()
                    .map(|q| {
                        ExtractionQuery::new(
                            q.id.clone(),
                            q.question.clone(),
                            CleanDocument::from_clean_text(&q.context, &policy),
                        )
                        .expect("query")
                    })
                    .collect();
                let preds = backend.extract_batch(&queries).expect("rule backend");
                Json(wire::Response {
                    predictions: preds
                        .into_iter()
                        .map(|p| wire::Prediction {
                            id: p.query_id,
                            start: p.clean_start,
                            end: p.clean_end,
                            text: p.text,
                            score: p.score,
                        })
                        .collect(),
                })
            }
        }),
    ))
}

/// Answers every `POST /extract` with a fixed status and body.
pub fn stub_reply(status: u16, body: &'static str) -> StubExtractor {
    let status = axum::http::StatusCode::from_u16(status).unwrap();
    serve_stub(Router::new().route("/extract", post(move || async move { (status, body) })))
}

fn serve_stub(app: Router) -> StubExtractor {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind");
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    StubExtractor { addr, _shutdown: tx }
}

/// GET `url` and parse the JSON body, whatever the status.
pub fn get_json(url: &str) -> (u16, serde_json::Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.get(url).call().expect("request");
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().expect("body");
    (status, serde_json::from_str(&body).unwrap_or(serde_json::Value::String(body)))
}

pub fn post_json(url: &str, body: &serde_json::Value, headers: &[(&str, &str)]) -> (u16, serde_json::Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut req = agent.post(url);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut resp = req.send_json(body).expect("request");
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().expect("body");
    (status, serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)))
}
