//! Browser bindings for the page normalizer, answer F1 and fact-yield estimate.
//! Every export takes plain values and returns a JSON string.

use serde_json::json;
use wasm_bindgen::prelude::*;
use webextractor_core::estimator::{estimate_facts, group_thousands, DomainPropertyStats, Ratio};
use webextractor_core::extract::{f1_max, normalize_answer};
use webextractor_core::html::{normalize, TagPolicy};
use webextractor_core::kg::PropertyId;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Clean text of `html` plus its offset map.
#[wasm_bindgen]
pub fn normalize_html(html: &str) -> Result<String, JsValue> {
    let doc = normalize(html.as_bytes(), &TagPolicy::default());
    serde_json::to_string(&json!({ "text": doc.text, "offset_map": doc.offset_map })).map_err(js_err)
}

/// Token F1 (0 to 100) of `prediction` against newline-separated gold answers.
#[wasm_bindgen]
pub fn squad_f1(prediction: &str, gold: &str) -> Result<String, JsValue> {
    let golds: Vec<String> = gold.lines().map(str::trim).filter(|g| !g.is_empty()).map(String::from).collect();
    let f1 = 100.0 * f1_max(prediction, &golds);
    serde_json::to_string(&json!({
        "f1": f1,
        "prediction": normalize_answer(prediction),
        "gold": golds.iter().map(|g| normalize_answer(g)).collect::<Vec<_>>(),
    }))
    .map_err(js_err)
}

/// `floor(links × freq × acc)` with both factors given as fractions.
#[wasm_bindgen]
pub fn estimate_yield(links: u64, freq_num: u64, freq_den: u64, acc_num: u64, acc_den: u64) -> Result<String, JsValue> {
    let stats = DomainPropertyStats {
        domain: PropertyId::new("P0").map_err(js_err)?,
        property: PropertyId::new("P0").map_err(js_err)?,
        links,
        freq: Ratio::new(freq_num, freq_den).map_err(js_err)?,
        acc: Ratio::new(acc_num, acc_den).map_err(js_err)?,
    };
    let n = estimate_facts(&stats);
    serde_json::to_string(&json!({ "estimate": n, "display": group_thousands(n) })).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_return_json() {
        let v: serde_json::Value = serde_json::from_str(&estimate_yield(65074, 94, 100, 194, 1000).unwrap()).unwrap();
        assert_eq!(v["estimate"], 11866);
        assert_eq!(v["display"], "11,866");

        let v: serde_json::Value = serde_json::from_str(&squad_f1("the Charles University", "Charles University\n").unwrap()).unwrap();
        assert_eq!(v["f1"], 100.0);

        let v: serde_json::Value =
            serde_json::from_str(&normalize_html("<dd class=\"begin-date\">1997<!---->(25 years ago)</dd>").unwrap()).unwrap();
        assert_eq!(v["text"], "<start> 1997 (25 years ago) <end>");
    }
}
