import init, { cost_curves, presets, simulate } from "./pkg/safetynet_web.js";

const COLORS = ["#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#d62728"];
const $ = (id) => document.getElementById(id);

// Minimal line plot on a 2D canvas. `series` is [{name, color, points: [[x, y]], dots}].
function plot(canvas, series, xLabel, yLabel, markers = []) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const g = canvas.getContext("2d");
  g.scale(dpr, dpr);
  g.clearRect(0, 0, w, h);
  const pad = { l: 70, r: 12, t: 10, b: 36 };
  const all = series.flatMap((s) => s.points);
  if (all.length === 0) {
    g.fillText("no data", w / 2 - 20, h / 2);
    return;
  }
  let [x0, x1] = [Math.min(...all.map((p) => p[0])), Math.max(...all.map((p) => p[0]))];
  let [y0, y1] = [Math.min(0, ...all.map((p) => p[1])), Math.max(...all.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const sx = (x) => pad.l + ((x - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((y - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  g.strokeStyle = "#999";
  g.fillStyle = "#444";
  g.font = "11px system-ui";
  g.beginPath();
  g.moveTo(pad.l, pad.t);
  g.lineTo(pad.l, h - pad.b);
  g.lineTo(w - pad.r, h - pad.b);
  g.stroke();
  for (let i = 0; i <= 5; i++) {
    const xv = x0 + ((x1 - x0) * i) / 5, yv = y0 + ((y1 - y0) * i) / 5;
    g.fillText(fmt(xv), sx(xv) - 12, h - pad.b + 14);
    g.fillText(fmt(yv), 4, sy(yv) + 4);
  }
  g.fillText(xLabel, w / 2 - 30, h - 6);
  g.save();
  g.translate(12, pad.t + 40);
  g.fillText(yLabel, 0, 0);
  g.restore();

  g.strokeStyle = "#bbb";
  g.setLineDash([3, 3]);
  for (const m of markers) {
    if (m.t < x0 || m.t > x1) continue;
    g.beginPath();
    g.moveTo(sx(m.t), pad.t);
    g.lineTo(sx(m.t), h - pad.b);
    g.stroke();
  }
  g.setLineDash([]);

  for (const s of series) {
    g.strokeStyle = g.fillStyle = s.color;
    if (s.dots) {
      for (const [x, y] of s.points) g.fillRect(sx(x) - 1, sy(y) - 1, 2, 2);
      continue;
    }
    g.beginPath();
    s.points.forEach(([x, y], i) => (i ? g.lineTo(sx(x), sy(y)) : g.moveTo(sx(x), sy(y))));
    g.stroke();
  }
}

function fmt(v) {
  const a = Math.abs(v);
  if (a >= 1e6) return (v / 1e6).toFixed(1) + "M";
  if (a >= 1e3) return (v / 1e3).toFixed(1) + "k";
  return v.toFixed(a < 10 && v !== 0 ? 1 : 0);
}

function drawCost() {
  const rate = Number($("c-rate").value), par = Number($("c-par").value);
  const max = Number($("c-max").value), targets = Number($("c-targets").value);
  let rows;
  try {
    rows = JSON.parse(cost_curves(rate, par, max, Math.max(1, max / 100), targets));
  } catch (e) {
    $("cost-legend").innerHTML = `<span class="err">${e}</span>`;
    return;
  }
  const names = [...new Set(rows.map((r) => r.protocol))];
  const series = names.map((n, i) => ({
    name: n,
    color: COLORS[i % COLORS.length],
    points: rows.filter((r) => r.protocol === n).map((r) => [r.handoff_latency_ms, r.total]),
  }));
  plot($("cost"), series, "handoff latency (ms)", "OTA bytes");
  $("cost-legend").innerHTML = series.map((s) => `<span><i style="background:${s.color}"></i>${s.name}</span>`).join("");
}

function runOnce() {
  const preset = $("r-preset").value, protocol = $("r-protocol").value;
  const seed = BigInt(Math.max(0, Math.floor(Number($("r-seed").value) || 0)));
  $("r-status").textContent = "running...";
  // let the status paint before the synchronous simulation starts
  setTimeout(() => {
    let view;
    const t0 = performance.now();
    try {
      view = JSON.parse(simulate(preset, protocol, seed, 20));
    } catch (e) {
      $("r-status").innerHTML = `<span class="err">${e}</span>`;
      return;
    }
    $("r-status").textContent = `${preset} under ${protocol}, simulated in ${(performance.now() - t0).toFixed(0)} ms`;
    const markers = view.markers.map((m) => ({ t: m.t_ms, label: m.label }));
    plot($("rate"), [{ name: "rate", color: COLORS[1], points: view.rate.map((p) => [p.t_ms, p.bps]) }], "time (ms)", "bit/s", markers);
    if (view.tcp) {
      plot(
        $("seq"),
        [
          { name: "sent", color: "#1f77b4", dots: true, points: view.tcp.sent },
          { name: "received", color: "#d62728", dots: true, points: view.tcp.received },
        ],
        "time (ms)",
        "sequence",
        markers,
      );
    } else {
      plot($("seq"), [], "time (ms)", "sequence");
    }
    const lines = Object.entries(view.summary).map(([k, v]) => `${k.padEnd(22)} ${v ?? "-"}`);
    lines.push("", "milestones:", ...view.markers.map((m) => `  ${m.t_ms.toFixed(1).padStart(9)} ms  ${m.label}`));
    $("summary").textContent = lines.join("\n");
  }, 10);
}

await init();
for (const p of JSON.parse(presets())) {
  $("r-preset").add(new Option(p, p));
}
$("r-preset").value = "fig5_tcp";
$("cost-form").addEventListener("input", drawCost);
$("r-go").addEventListener("click", runOnce);
window.addEventListener("resize", drawCost);
drawCost();
runOnce();
