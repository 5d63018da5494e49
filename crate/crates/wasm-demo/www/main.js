import init, { weakMomentCurve, behrensFisherRows, stieltjesGaps } from "./pkg/weaktrans_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

// Log-x plot of one or more series sharing the x values.
function plot(canvas, xs, series, logY) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 50;
  ctx.clearRect(0, 0, w, h);
  const tx = (x) => Math.log10(x);
  const ty = (y) => (logY ? Math.log10(Math.max(y, 1e-300)) : y);
  const xl = Math.min(...xs.map(tx)), xh = Math.max(...xs.map(tx));
  const ys = series.flatMap((s) => s.ys.map(ty)).filter(Number.isFinite);
  let yl = Math.min(...ys), yh = Math.max(...ys);
  if (yh === yl) { yl -= 1; yh += 1; }
  const px = (x) => pad + ((tx(x) - xl) / (xh - xl || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((ty(y) - yl) / (yh - yl)) * (h - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "11px monospace";
  ctx.fillText(`s = ${xs[0].toPrecision(3)}`, pad, h - pad + 15);
  ctx.fillText(`s = ${xs[xs.length - 1].toPrecision(3)}`, w - pad - 70, h - pad + 15);
  const fmt = (v) => (logY ? `1e${v.toFixed(1)}` : v.toPrecision(3));
  ctx.fillText(fmt(yh), 2, pad + 4);
  ctx.fillText(fmt(yl), 2, h - pad);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.ys[i])) : ctx.moveTo(px(x), py(s.ys[i]))));
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 200, pad + 15 + 14 * k);
  });
}

function guard(errId, f) {
  $(errId).textContent = "";
  try { f(); } catch (e) { $(errId).textContent = e.message ?? String(e); }
}

function runCurve() {
  guard("c-err", () => {
    const theta = $("c-theta").value.split(",").map(Number);
    const flat = weakMomentCurve($("c-model").value, theta, num("c-order"), num("c-lo"), num("c-hi"), 60);
    const xs = [], ys = [];
    for (let i = 0; i < flat.length; i += 2) { xs.push(flat[i]); ys.push(flat[i + 1]); }
    plot($("c-canvas"), xs, [{ ys, color: "#1f6feb", label: `w_${$("c-order").value}(s)` }], false);
  });
}

function runBf() {
  guard("b-err", () => {
    const flat = behrensFisherRows(num("b-mu1"), num("b-mu2"), num("b-s1"), num("b-s2"), num("b-lo"), num("b-hi"), 100);
    const xs = [], nuis = [], sig = [];
    for (let i = 0; i < flat.length; i += 4) { xs.push(flat[i]); nuis.push(flat[i + 1]); sig.push(flat[i + 2]); }
    plot($("b-canvas"), xs, [
      { ys: nuis, color: "#d1242f", label: "sup nuisance gap" },
      { ys: sig, color: "#1a7f37", label: "signal gap" },
    ], true);
  });
}

function runStieltjes() {
  guard("s-err", () => {
    const g = stieltjesGaps(num("s-eps"), num("s-s"));
    const rows = ["<tr><th>order</th><th>classical (relative)</th><th>weak (absolute)</th></tr>"];
    for (let j = 0; j <= 10; j++) {
      const weak = j <= 4 ? g[11 + j].toExponential(3) : "";
      rows.push(`<tr><td>${j}</td><td>${g[j].toExponential(3)}</td><td>${weak}</td></tr>`);
    }
    $("s-table").innerHTML = rows.join("");
  });
}

await init();
$("c-run").onclick = runCurve;
$("b-run").onclick = runBf;
$("s-run").onclick = runStieltjes;
runCurve();
runBf();
runStieltjes();
