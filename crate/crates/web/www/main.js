import init, { sensitivities, threshold_curve, prune } from "./pkg/serene_web.js";

const COLORS = { exact: "#222", lower: "#1f77b4", upper: "#d62728", local: "#2ca02c" };
const CLASS_COLORS = [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];
const $ = (id) => document.getElementById(id);

function guarded(out, fn) {
  try {
    out.classList.remove("err");
    fn();
  } catch (e) {
    out.textContent = String(e);
    out.classList.add("err");
  }
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, 10);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - 10, h - pad);
  ctx.stroke();
}

function drawHistogram(view) {
  const c = $("s-canvas"), ctx = c.getContext("2d");
  const pad = 40, w = c.width, h = c.height;
  axes(ctx, w, h, pad);
  const bins = view.edges.length - 1;
  const peak = Math.max(1, ...view.estimators.flatMap((e) => e.counts));
  const lx = (i) => pad + ((w - pad - 10) * i) / bins;
  const ly = (n) => h - pad - ((h - pad - 20) * n) / peak;
  for (const e of view.estimators) {
    ctx.strokeStyle = COLORS[e.name];
    ctx.lineWidth = 2;
    ctx.beginPath();
    e.counts.forEach((n, i) => {
      ctx.lineTo(lx(i), ly(n));
      ctx.lineTo(lx(i + 1), ly(n));
    });
    ctx.stroke();
  }
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  for (let i = 0; i <= bins; i += Math.ceil(bins / 6)) {
    ctx.fillText(view.edges[i].toExponential(0), lx(i) - 12, h - pad + 14);
  }
  view.estimators.forEach((e, k) => {
    ctx.fillStyle = COLORS[e.name];
    ctx.fillText(`${e.name}  mean ${e.mean.toExponential(2)}`, w - 190, 20 + 14 * k);
  });
}

function runSensitivity() {
  guarded($("s-out"), () => {
    const v = JSON.parse(sensitivities($("s-arch").value, $("s-act").value, +$("s-seed").value, +$("s-epochs").value));
    drawHistogram(v);
    $("s-out").textContent =
      `training accuracy ${(100 * v.accuracy).toFixed(1)}%\n` +
      v.estimators.map((e) => `${e.name.padEnd(6)} per layer mean: ` +
        e.values.map((l) => (l.reduce((a, b) => a + b, 0) / l.length).toExponential(2)).join("  ")).join("\n");
  });
}

function runCurve() {
  guarded($("c-out"), () => {
    const v = JSON.parse(threshold_curve($("c-arch").value, +$("c-seed").value, +$("c-twt").value));
    const c = $("c-canvas"), ctx = c.getContext("2d");
    const pad = 40, w = c.width, h = c.height;
    axes(ctx, w, h, pad);
    const ts = v.points.map((p) => Math.log10(p.threshold));
    const t0 = Math.min(...ts), t1 = Math.max(...ts);
    const lmax = Math.min(Math.max(...v.points.map((p) => p.loss)), v.bound * 4);
    const x = (t) => pad + ((w - pad - 10) * (Math.log10(t) - t0)) / (t1 - t0 || 1);
    const y = (l) => h - pad - ((h - pad - 20) * Math.min(l, lmax)) / lmax;
    ctx.strokeStyle = "#1f77b4";
    ctx.lineWidth = 2;
    ctx.beginPath();
    v.points.forEach((p) => ctx.lineTo(x(p.threshold), y(p.loss)));
    ctx.stroke();
    ctx.strokeStyle = "#d62728";
    ctx.setLineDash([5, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, y(v.bound));
    ctx.lineTo(w - 10, y(v.bound));
    ctx.stroke();
    ctx.setLineDash([]);
    if (!v.no_prune) {
      ctx.strokeStyle = "#2ca02c";
      ctx.beginPath();
      ctx.moveTo(x(v.chosen), 10);
      ctx.lineTo(x(v.chosen), h - pad);
      ctx.stroke();
    }
    $("c-out").textContent =
      `loss ${v.loss_before.toFixed(4)}, bound ${v.bound.toFixed(4)}\n` +
      (v.no_prune ? "no threshold fits the bound" : `chosen threshold ${v.chosen.toExponential(3)}`) +
      ` after ${v.probes} probes`;
  });
}

function drawGrid(canvas, grid, cells, points) {
  const ctx = canvas.getContext("2d");
  const s = canvas.width / grid;
  for (let r = 0; r < grid; r++) {
    for (let c = 0; c < grid; c++) {
      const [R, G, B] = CLASS_COLORS[cells[r * grid + c] % CLASS_COLORS.length];
      ctx.fillStyle = `rgba(${R},${G},${B},0.35)`;
      ctx.fillRect(c * s, r * s, s + 1, s + 1);
    }
  }
  for (const [px, py, label] of points) {
    const [R, G, B] = CLASS_COLORS[label % CLASS_COLORS.length];
    ctx.fillStyle = `rgb(${R},${G},${B})`;
    ctx.beginPath();
    ctx.arc(px * canvas.width, (1 - py) * canvas.height, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawCensus(canvas, before, after) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const cols = before.length;
  before.forEach(([total], k) => {
    const alive = after[k][1];
    const x = ((k + 0.5) * w) / cols;
    for (let i = 0; i < total; i++) {
      const y = 12 + ((h - 24) * (i + 0.5)) / total;
      const r = Math.min(6, (h - 24) / total / 2.4);
      ctx.fillStyle = i < alive ? "#1f77b4" : "#ddd";
      ctx.beginPath();
      ctx.arc(x, y, r, 0, 2 * Math.PI);
      ctx.fill();
    }
  });
}

function runPrune() {
  guarded($("p-out"), () => {
    const v = JSON.parse(prune($("p-arch").value, $("p-est").value, +$("p-lambda").value, +$("p-twt").value, +$("p-seed").value));
    drawGrid($("p-before"), v.grid, v.before, v.points);
    drawGrid($("p-after"), v.grid, v.after, v.points);
    drawCensus($("p-net"), v.census_before, v.census_after);
    const ratio = v.params / Math.max(1, v.nonzero_after);
    $("p-out").textContent =
      `accuracy ${(100 * v.accuracy_before).toFixed(1)}% -> ${(100 * v.accuracy_after).toFixed(1)}%\n` +
      `nonzero weights ${v.nonzero_before} -> ${v.nonzero_after}, compression ${ratio.toFixed(2)}x\n` +
      `neurons per layer ${v.census_after.map(([t, s]) => `${s}/${t}`).join("  ")}\n\n` +
      v.steps.map((s) => `iter ${s.iteration} epoch ${s.epoch}: ` +
        (s.threshold != null ? `threshold ${s.threshold.toExponential(2)} -> ${s.nonzero_weights} weights`
                             : `validation accuracy ${s.validation_accuracy?.toFixed(3)}`)).join("\n");
  });
}

await init();
$("s-run").onclick = runSensitivity;
$("c-run").onclick = runCurve;
$("p-run").onclick = runPrune;
runSensitivity();
runCurve();
