// Built with `wasm-pack build --target web --out-dir www/pkg` from the crate root.
import init, { step, stage, exponents } from "./pkg/mavk_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function heatmap(canvas, rows) {
  const n2 = rows.length, n1 = rows[0].length;
  canvas.width = n1;
  canvas.height = n2;
  const flat = rows.flat();
  const lo = Math.min(...flat), hi = Math.max(...flat);
  const span = hi - lo || 1;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n1, n2);
  rows.forEach((row, j) => row.forEach((v, i) => {
    const t = (v - lo) / span;
    const k = 4 * ((n2 - 1 - j) * n1 + i);
    img.data[k] = 255 * t;
    img.data[k + 1] = 80 + 120 * (1 - Math.abs(2 * t - 1));
    img.data[k + 2] = 255 * (1 - t);
    img.data[k + 3] = 255;
  }));
  ctx.putImageData(img, 0, 0);
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    $(out).textContent = "error: " + e;
  }
}

function runStep() {
  guard("step-out", () => {
    const r = JSON.parse(step($("step-kind").value, num("step-lambda"), num("step-n"), 1n));
    $("step-out").textContent =
      `identity residual ${r.residual.toExponential(3)}  (scaled by 1 + |a|_2^2: ${r.scaled_residual.toExponential(3)}, h = ${r.h.toFixed(5)})`;
    heatmap($("step-canvas"), r.field);
  });
}

function runStage() {
  guard("stage-out", () => {
    const r = JSON.parse(stage(num("stage-lambda"), num("stage-n"), num("stage-tilt"), 0n));
    $("stage-out").textContent =
      `sup defect ${r.defect_in.toFixed(4)} -> ${r.defect_out.toExponential(3)}, closing identity ${r.exactness.toExponential(2)}, C = ${r.c_tilde.map((c) => c.toFixed(3)).join(", ")}`;
    heatmap($("stage-canvas"), r.field);
  });
}

function runExponents() {
  guard("exp-table", () => {
    const rows = JSON.parse(exponents(num("exp-k"), BigInt(num("exp-n")), num("exp-beta")));
    const head = "<tr><th>k</th><th>family</th><th>bound</th><th>alpha_max at N</th><th>limit N to infinity</th></tr>";
    $("exp-table").innerHTML = head + rows.map((r) =>
      `<tr><td>${r.k}</td><td>${r.family}</td><td>${r.bound}</td><td>${r.alpha_max}</td><td>${r.chi_limit}</td></tr>`).join("");
  });
}

await init();
$("step-run").onclick = runStep;
$("stage-run").onclick = runStage;
$("exp-run").onclick = runExponents;
runExponents();
