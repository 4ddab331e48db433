import init, { density, simulate_and_fit, percentile_to_z, z_to_percentile } from "./pkg/refcurve_wasm.js";

const $ = (id) => document.getElementById(id);
const PALETTE = ["#9e9ac8", "#6baed6", "#74c476", "#e6550d", "#74c476", "#6baed6", "#9e9ac8"];

function frame(ctx, xr, yr) {
  const { width: w, height: h } = ctx.canvas;
  const pad = { l: 50, r: 10, t: 10, b: 28 };
  const sx = (x) => pad.l + ((x - xr[0]) / (xr[1] - xr[0])) * (w - pad.l - pad.r);
  const sy = (y) => h - pad.b - ((y - yr[0]) / (yr[1] - yr[0])) * (h - pad.t - pad.b);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad.l, pad.t);
  ctx.lineTo(pad.l, h - pad.b);
  ctx.lineTo(w - pad.r, h - pad.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const x = xr[0] + ((xr[1] - xr[0]) * i) / 4;
    const y = yr[0] + ((yr[1] - yr[0]) * i) / 4;
    ctx.fillText(x.toPrecision(3), sx(x) - 12, h - 10);
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
  }
  return { sx, sy };
}

function line(ctx, sx, sy, xs, ys, color, dash = []) {
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.lineWidth = 1.6;
  ctx.beginPath();
  let open = false;
  xs.forEach((x, i) => {
    const y = ys[i];
    if (y === null || !Number.isFinite(y)) {
      open = false;
      return;
    }
    if (open) ctx.lineTo(sx(x), sy(y));
    else ctx.moveTo(sx(x), sy(y));
    open = true;
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

function showError(el, e) {
  el.className = "out err";
  el.textContent = String(e && e.message ? e.message : e);
}

function drawDensity() {
  const m = +$("d-m").value, s = +$("d-s").value, l = +$("d-l").value;
  $("d-m-v").textContent = m.toFixed(1);
  $("d-s-v").textContent = s.toFixed(2);
  $("d-l-v").textContent = l.toFixed(2);
  const out = $("d-out");
  try {
    const t = JSON.parse(density(m, s, l, 400));
    const ctx = $("d-canvas").getContext("2d");
    const ymax = Math.max(...t.pdf);
    const { sx, sy } = frame(ctx, [t.y[0], t.y[t.y.length - 1]], [0, ymax * 1.05]);
    line(ctx, sx, sy, t.y, t.pdf, "#08519c");
    t.quantiles.forEach((q, i) => line(ctx, sx, sy, [q, q], [0, ymax], PALETTE[i], [4, 3]));
    out.className = "out";
    out.textContent =
      t.levels.map((lv, i) => `P${lv} = ${t.quantiles[i].toFixed(3)}`).join("   ") +
      `\nadmissible normal mass = ${t.truncation_mass.toFixed(8)}`;
  } catch (e) {
    showError(out, e);
  }
}

function runFit() {
  const out = $("f-out");
  out.className = "out";
  out.textContent = "fitting...";
  setTimeout(() => {
    try {
      const started = performance.now();
      const r = JSON.parse(
        simulate_and_fit($("f-shape").value, +$("f-n").value, BigInt(+$("f-seed").value),
          +$("f-m").value, +$("f-s").value, +$("f-l").value),
      );
      const ms = performance.now() - started;
      const ctx = $("f-canvas").getContext("2d");
      const all = r.y.concat(...r.truth.flat().filter(Number.isFinite));
      const { sx, sy } = frame(ctx, [0, 100], [Math.min(...all) * 0.98, Math.max(...all) * 1.02]);
      ctx.fillStyle = "rgba(0,0,0,0.25)";
      r.x.forEach((x, i) => ctx.fillRect(sx(x) - 1, sy(r.y[i]) - 1, 2, 2));
      r.levels.forEach((_, i) => {
        line(ctx, sx, sy, r.grid, r.truth[i], PALETTE[i], [5, 4]);
        line(ctx, sx, sy, r.grid, r.fitted[i], PALETTE[i]);
      });
      out.textContent =
        `global deviance ${r.global_deviance.toFixed(3)}, edf M/S/L ${r.edf.map((e) => e.toFixed(2)).join(" / ")}, ` +
        `${r.converged ? "converged" : "not converged"} after ${r.iterations} cycles (${ms.toFixed(0)} ms)` +
        "\nsolid: fitted percentiles 3-97; dashed: truth";
    } catch (e) {
      showError(out, e);
    }
  }, 0);
}

function convertFromPercentile() {
  const out = $("c-out");
  try {
    const z = percentile_to_z(+$("c-p").value);
    $("c-z").value = z.toFixed(5);
    out.className = "out";
    out.textContent = `percentile ${$("c-p").value} -> z = ${z.toFixed(5)}`;
  } catch (e) {
    showError(out, e);
  }
}

function convertFromZ() {
  const z = +$("c-z").value;
  const p = z_to_percentile(z);
  $("c-p").value = p.toFixed(5);
  $("c-out").className = "out";
  $("c-out").textContent = `z = ${z} -> percentile ${p.toFixed(5)}`;
}

await init();
["d-m", "d-s", "d-l"].forEach((id) => $(id).addEventListener("input", drawDensity));
$("f-run").addEventListener("click", runFit);
$("c-p").addEventListener("input", convertFromPercentile);
$("c-z").addEventListener("input", convertFromZ);
drawDensity();
convertFromPercentile();
runFit();
