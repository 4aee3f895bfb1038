import init, { solveTrial, surrogateMap, checkModel } from "./pkg/fas_aircomp_wasm.js";

const COLORS = { proposed: "#d62728", fpa: "#1f77b4", eas: "#2ca02c" };
const $ = (id) => document.getElementById(id);
const status = (text) => { $("status").textContent = text; };

function params() {
  const num = (id) => Number($(id).value);
  return {
    num_users: num("num_users"),
    num_subcarriers: num("num_subcarriers"),
    snr_db: num("snr_db"),
    seed: num("seed"),
    trial: num("trial"),
    instances: num("instances"),
  };
}

// Maps region coordinates (meters) to canvas pixels, y up.
function frame(canvas, region) {
  const [x0, x1, y0, y1] = region;
  const pad = 20;
  const s = Math.min((canvas.width - 2 * pad) / (x1 - x0), (canvas.height - 2 * pad) / (y1 - y0));
  return {
    s,
    x: (x) => pad + (x - x0) * s,
    y: (y) => canvas.height - pad - (y - y0) * s,
  };
}

function drawRegion(ctx, f, region) {
  const [x0, x1, y0, y1] = region;
  ctx.strokeStyle = "#888";
  ctx.strokeRect(f.x(x0), f.y(y1), (x1 - x0) * f.s, (y1 - y0) * f.s);
}

function drawAntennas(ctx, f, positions, color, radius) {
  ctx.fillStyle = color;
  positions.forEach(([x, y], m) => {
    ctx.beginPath();
    ctx.arc(f.x(x), f.y(y), radius, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(String(m + 1), f.x(x) + radius + 2, f.y(y) - radius);
  });
}

function drawLayouts(report) {
  const canvas = $("layout");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const f = frame(canvas, report.region);
  drawRegion(ctx, f, report.region);
  ctx.font = "11px sans-serif";
  for (const s of report.schemes) {
    drawAntennas(ctx, f, s.positions, COLORS[s.scheme], s.scheme === "proposed" ? 6 : 4);
  }
}

function drawTraces(report) {
  const canvas = $("trace");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const all = report.schemes.flatMap((s) => s.trace);
  const lo = Math.min(...all), hi = Math.max(...all);
  const len = Math.max(...report.schemes.map((s) => s.trace.length));
  const pad = 40;
  const px = (i) => pad + (i / Math.max(len - 1, 1)) * (canvas.width - 2 * pad);
  const py = (v) => canvas.height - pad - ((v - lo) / Math.max(hi - lo, 1e-12)) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toFixed(4), 2, pad);
  ctx.fillText(lo.toFixed(4), 2, canvas.height - pad);
  ctx.fillText("AO iteration", canvas.width / 2 - 30, canvas.height - 10);
  for (const s of report.schemes) {
    ctx.strokeStyle = COLORS[s.scheme];
    ctx.beginPath();
    s.trace.forEach((v, i) => (i ? ctx.lineTo(px(i), py(v)) : ctx.moveTo(px(i), py(v))));
    ctx.stroke();
  }
}

function drawMap(map, antenna) {
  const canvas = $("layout");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const f = frame(canvas, map.region);
  const scores = map.scores[antenna];
  const lo = Math.min(...scores), hi = Math.max(...scores);
  const cell = map.step * f.s;
  for (let i = 0; i < map.nx; i++) {
    for (let j = 0; j < map.ny; j++) {
      const t = (scores[i * map.ny + j] - lo) / Math.max(hi - lo, 1e-12);
      ctx.fillStyle = `hsl(${240 - 240 * t}, 80%, ${25 + 45 * t}%)`;
      const x = map.region[0] + i * map.step, y = map.region[2] + j * map.step;
      ctx.fillRect(f.x(x) - cell / 2, f.y(y) - cell / 2, cell + 1, cell + 1);
    }
  }
  drawRegion(ctx, f, map.region);
  ctx.font = "11px sans-serif";
  drawAntennas(ctx, f, map.positions, "#fff", 4);
}

function run(label, work) {
  status(`${label}…`);
  // Let the status paint before the synchronous solve blocks the thread.
  setTimeout(() => {
    const t0 = performance.now();
    try {
      const text = work();
      status(`${text}\n(${((performance.now() - t0) / 1000).toFixed(2)} s)`);
    } catch (e) {
      status(`error: ${e.message ?? e}`);
    }
  }, 10);
}

await init();
status("ready");

$("solve").onclick = () => run("solving", () => {
  const report = JSON.parse(solveTrial(JSON.stringify(params())));
  drawLayouts(report);
  drawTraces(report);
  return report.schemes
    .map((s) => `${s.scheme.padEnd(9)} MSE ${s.mse.toFixed(6)}  after ${s.iterations} AO iterations`)
    .join("\n");
});

$("map").onclick = () => run("building surrogate", () => {
  const map = JSON.parse(surrogateMap(JSON.stringify(params())));
  const m = Math.min(Math.max(Number($("antenna").value), 1), map.scores.length) - 1;
  drawMap(map, m);
  return `surrogate score for antenna ${m + 1} on a ${map.nx}x${map.ny} lattice (bright = higher), white = current layout`;
});

$("check").onclick = () => run("simulating OFDM link", () => {
  const out = JSON.parse(checkModel(JSON.stringify(params())));
  return `${out.instances} instances, cp ${out.cp_len}: max relative error ${out.max_relative_error.toExponential(2)}`;
});
