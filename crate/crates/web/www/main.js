import init, { fit_demo, weight_profile, coverage_study } from "./pkg/gpsdrf_web.js";

const COLORS = { naive: "#d95f02", weighted: "#1b9e77", stratified: "#7570b3", truth: "#222" };
const $ = (id) => document.getElementById(id);

function settings() {
  return {
    n: Number($("n").value),
    r2: Number($("r2").value),
    s2y: Number($("s2y").value),
    beta1: Number($("beta1").value),
    nboot: Number($("nboot").value),
    seed: Number($("seed").value) >>> 0,
  };
}

const fmt = (v, d = 4) => (v === null || v === undefined || !Number.isFinite(v) ? "-" : v.toFixed(d));

function showError(target, err) {
  target.innerHTML = `<p class="error">${String(err)}</p>`;
}

function scale(lo, hi, a, b) {
  const span = hi - lo || 1;
  return (v) => a + ((v - lo) / span) * (b - a);
}

function drawScatter(data) {
  const c = $("scatter");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pad = 40;
  const tlo = Math.min(...data.t), thi = Math.max(...data.t);
  const ylo = Math.min(...data.y), yhi = Math.max(...data.y);
  const sx = scale(tlo, thi, pad, c.width - 10);
  const sy = scale(ylo, yhi, c.height - pad, 10);
  g.strokeStyle = "#999";
  g.strokeRect(pad, 10, c.width - pad - 10, c.height - pad - 10);
  g.fillStyle = "rgba(60, 60, 60, 0.35)";
  data.t.forEach((t, i) => {
    g.beginPath();
    g.arc(sx(t), sy(data.y[i]), 2, 0, 2 * Math.PI);
    g.fill();
  });
  const line = (b, color, dash) => {
    g.save();
    g.beginPath();
    g.rect(pad, 10, c.width - pad - 10, c.height - pad - 10);
    g.clip();
    g.strokeStyle = color;
    g.lineWidth = 2;
    g.setLineDash(dash);
    g.beginPath();
    g.moveTo(sx(tlo), sy(b[0] + b[1] * tlo));
    g.lineTo(sx(thi), sy(b[0] + b[1] * thi));
    g.stroke();
    g.restore();
  };
  line(data.truth, COLORS.truth, [6, 4]);
  for (const e of data.report.estimators) {
    if (e.beta) line(e.beta, COLORS[e.estimator], []);
  }
  g.fillStyle = "#444";
  g.fillText("exposure T", c.width / 2 - 25, c.height - 12);
  g.save();
  g.translate(12, c.height / 2 + 20);
  g.rotate(-Math.PI / 2);
  g.fillText("outcome Y", 0, 0);
  g.restore();
}

function fitTable(data) {
  const r = data.report;
  let html = `<p>Propensity R<sup>2</sup> = ${fmt(r.propensity?.r2, 3)}; true &beta;<sub>1</sub> = ${data.truth[1]}</p>`;
  html += "<table><tr><th>Estimator / standard error</th><th>&beta;<sub>0</sub></th><th>&beta;<sub>1</sub></th></tr>";
  for (const e of r.estimators) {
    const sw = `<span class="swatch" style="background:${COLORS[e.estimator]}"></span>`;
    html += `<tr><th>${sw}${e.estimator}</th><td>${fmt(e.beta?.[0])}</td><td>${fmt(e.beta?.[1])}</td></tr>`;
    for (const s of e.standard_errors) {
      const label = s.variance.replaceAll("_", " ");
      if (s.se) {
        html += `<tr><td>&nbsp;&nbsp;${label}</td><td>(${fmt(s.se[0])})</td><td>(${fmt(s.se[1])})</td></tr>`;
      } else {
        html += `<tr><td>&nbsp;&nbsp;${label}</td><td colspan="2" class="bad">${s.error}</td></tr>`;
      }
    }
  }
  $("fit-table").innerHTML = html + "</table>";
}

function drawHistogram(p) {
  const c = $("hist");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pad = 30;
  const max = Math.max(...p.counts, 1);
  const w = (c.width - 2 * pad) / p.counts.length;
  g.fillStyle = COLORS.weighted;
  p.counts.forEach((k, i) => {
    const h = ((c.height - 2 * pad) * k) / max;
    g.fillRect(pad + i * w, c.height - pad - h, w - 1, h);
  });
  g.fillStyle = "#444";
  const last = p.edges[p.edges.length - 1] + (p.edges[1] - p.edges[0]);
  g.fillText(`log10(w) from ${fmt(p.edges[0], 2)} to ${fmt(last, 2)}`, pad, c.height - 8);
  const zero = pad + ((0 - p.edges[0]) / (last - p.edges[0])) * (c.width - 2 * pad);
  g.strokeStyle = "#222";
  g.beginPath();
  g.moveTo(zero, pad);
  g.lineTo(zero, c.height - pad);
  g.stroke();
}

function weightTable(p) {
  const d = p.diagnostics;
  $("weight-table").innerHTML = `<table>
    <tr><th>Target R<sup>2</sup></th><td>${fmt(p.r2, 2)}</td></tr>
    <tr><th>Fitted R<sup>2</sup></th><td>${fmt(p.fitted_r2, 3)}</td></tr>
    <tr><th>Min weight</th><td>${fmt(d.min)}</td></tr>
    <tr><th>Max weight</th><td>${fmt(d.max, 2)}</td></tr>
    <tr><th>Mean weight</th><td>${fmt(d.mean)}</td></tr>
    <tr><th>Coefficient of variation</th><td>${fmt(d.cv, 3)}</td></tr>
    <tr><th>Weights above ${d.threshold}</th><td>${d.count_above}</td></tr>
  </table>`;
}

function coverageTable(study) {
  const rows = study.rows.filter((r) => r.parameter === "beta1");
  let html = `<table><tr><th>Method (&beta;<sub>1</sub>, ${study.replicates} replicates)</th>
    <th>Bias</th><th>RMSE</th><th>Mean SE</th><th>Empirical SD</th><th>Ratio</th><th>Coverage</th></tr>`;
  for (const r of rows) {
    const cov = `<td class="${Math.abs(r.coverage - 0.95) > 0.05 ? "bad" : ""}">${fmt(r.coverage, 3)}</td>`;
    html += `<tr><th>${r.method.replaceAll("_", " ")}</th><td>${fmt(r.bias)}</td><td>${fmt(r.rmse)}</td>
      <td>${fmt(r.mean_se)}</td><td>${fmt(r.empirical_sd)}</td><td>${fmt(r.variability_ratio, 3)}</td>${cov}</tr>`;
  }
  $("coverage-table").innerHTML = html + "</table>";
}

function runFit() {
  const s = settings();
  try {
    const data = JSON.parse(fit_demo(s.n, s.r2, s.s2y, s.beta1, s.nboot, s.seed));
    drawScatter(data);
    fitTable(data);
  } catch (e) {
    showError($("fit-table"), e);
  }
}

function runWeights() {
  const s = settings();
  try {
    const p = JSON.parse(weight_profile(s.n, s.r2, s.seed));
    drawHistogram(p);
    weightTable(p);
  } catch (e) {
    showError($("weight-table"), e);
  }
}

function runCoverage() {
  const s = settings();
  const reps = Number($("reps").value);
  $("coverage-status").textContent = "running...";
  // Let the status repaint before the synchronous study blocks the page.
  setTimeout(() => {
    const start = performance.now();
    try {
      coverageTable(JSON.parse(coverage_study(s.n, s.r2, s.s2y, reps, s.nboot, s.seed)));
      $("coverage-status").textContent = `done in ${((performance.now() - start) / 1000).toFixed(1)} s`;
    } catch (e) {
      $("coverage-status").textContent = "";
      showError($("coverage-table"), e);
    }
  }, 20);
}

await init();
$("r2").addEventListener("input", () => ($("r2-out").textContent = Number($("r2").value).toFixed(2)));
$("fit").addEventListener("click", runFit);
$("weights").addEventListener("click", runWeights);
$("coverage").addEventListener("click", runCoverage);
runFit();
runWeights();
