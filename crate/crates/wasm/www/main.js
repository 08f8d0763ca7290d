// Built with: wasm-pack build crates/wasm --target web --out-dir www/pkg
import init, { normalize_html, squad_f1, estimate_yield } from "./pkg/webextractor_wasm.js";

const $ = (id) => document.getElementById(id);

function show(out, f) {
  try {
    $(out).textContent = JSON.stringify(JSON.parse(f()), null, 2);
  } catch (e) {
    $(out).textContent = `error: ${e}`;
  }
}

await init();

$("run-normalize").onclick = () => show("normalize-out", () => normalize_html($("html").value));
$("run-f1").onclick = () => show("f1-out", () => squad_f1($("pred").value, $("gold").value));
$("run-yield").onclick = () =>
  show("yield-out", () =>
    estimate_yield(
      BigInt($("links").value),
      BigInt($("fn").value),
      BigInt($("fd").value),
      BigInt($("an").value),
      BigInt($("ad").value),
    ),
  );
