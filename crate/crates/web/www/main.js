import init, { slab_response, dispersion_diagram, purcell_curve } from "./pkg/cqnmd_web.js";

function values(section) {
  const out = {};
  for (const input of section.querySelectorAll("input")) out[input.name] = Number(input.value);
  return out;
}

function rows(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

// series: [{ points: [[x, y]], color, line }]
function plot(canvas, series, xlabel, ylabel) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 45;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap(s => s.points).filter(p => Number.isFinite(p[0]) && Number.isFinite(p[1]));
  if (all.length === 0) return;
  const xs = all.map(p => p[0]), ys = all.map(p => p[1]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(0, ...ys), Math.max(...ys)];
  const sx = x => pad + (x - x0) / (x1 - x0 || 1) * (w - 2 * pad);
  const sy = y => h - pad - (y - y0) / (y1 - y0 || 1) * (h - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(xlabel, w / 2, h - 10);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 15);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 15);
  ctx.fillText(ylabel, 5, pad - 10);
  ctx.fillText(y1.toPrecision(3), 5, pad + 4);
  ctx.fillText(y0.toPrecision(3), 5, h - pad);

  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.line) {
      ctx.beginPath();
      let open = false;
      for (const [x, y] of s.points) {
        if (!Number.isFinite(y)) { open = false; continue; }
        open ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y));
        open = true;
      }
      ctx.stroke();
    } else {
      for (const [x, y] of s.points) if (Number.isFinite(y)) ctx.fillRect(sx(x) - 1.5, sy(y) - 1.5, 3, 3);
    }
  }
}

function wire(id, action) {
  const section = document.getElementById(id);
  const err = section.querySelector(".err");
  const canvas = section.querySelector("canvas");
  const go = () => {
    err.textContent = "";
    try {
      action(values(section), canvas);
    } catch (e) {
      err.textContent = e.message ?? String(e);
    }
  };
  section.querySelector("button").addEventListener("click", go);
  go();
}

await init();

wire("slab", (v, canvas) => {
  const pts = rows(slab_response(v.eps, v.thickness, v.omega_max, 600), 2);
  plot(canvas, [{ points: pts, color: "#c33", line: true }], "ω", "R");
});

wire("dispersion", (v, canvas) => {
  const pts = rows(dispersion_diagram(v.omega_p, v.omega_0, v.length, v.n_points), 3);
  pts.sort((a, b) => a[0] - b[0]);
  plot(canvas, [
    { points: pts.map(p => [p[1], p[0]]), color: "#c33" },
    ...[pts.filter(p => p[0] < v.omega_0), pts.filter(p => p[0] >= v.omega_0)].map(branch => ({
      points: branch.map(p => [p[2], p[0]]), color: "#36c", line: true,
    })),
  ], "k", "ω");
});

wire("purcell", (v, canvas) => {
  const pts = rows(purcell_curve(v.omega_p, v.omega_0, v.length, v.n_points, v.omega_min, v.omega_max, 120), 3);
  plot(canvas, [
    { points: pts.map(p => [p[0], p[1]]), color: "#c33" },
    { points: pts.map(p => [p[0], p[2]]), color: "#36c", line: true },
  ], "ω", "Γ/Γ₀");
});
