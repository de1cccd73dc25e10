import init, { kernelComparison, simulate, fit } from "./pkg/rflvm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out.error) throw new Error(out.error);
  return out;
}

function heatmap(canvas, m, lo, hi) {
  const n = m.length, cols = m[0].length;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(cols, n);
  for (let r = 0; r < n; r++) {
    for (let c = 0; c < cols; c++) {
      const t = Math.max(0, Math.min(1, (m[r][c] - lo) / (hi - lo || 1)));
      const i = 4 * (r * cols + c);
      img.data[i] = 255 * t;
      img.data[i + 1] = 80 + 100 * t;
      img.data[i + 2] = 255 * (1 - t);
      img.data[i + 3] = 255;
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = cols;
  tmp.height = n;
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function scatter(canvas, pts, labels) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const xs = pts.map((p) => p[0]), ys = pts.map((p) => p[1]);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const k = Math.max(...labels) + 1;
  const pad = 8, w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  pts.forEach((p, i) => {
    ctx.fillStyle = `hsl(${(360 * labels[i]) / k}, 70%, 45%)`;
    ctx.beginPath();
    ctx.arc(pad + (w * (p[0] - x0)) / (x1 - x0 || 1), pad + h - (h * (p[1] - y0)) / (y1 - y0 || 1), 2.5, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function line(canvas, values) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = Math.min(...values), hi = Math.max(...values);
  const pad = 8, w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  ctx.strokeStyle = "#246";
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = pad + (w * i) / Math.max(1, values.length - 1);
    const y = pad + h - (h * (v - lo)) / (hi - lo || 1);
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function guarded(outId, body) {
  try {
    body();
  } catch (e) {
    $(outId).textContent = `error: ${e.message}`;
  }
}

function runKernel() {
  $("k-m-val").textContent = $("k-m").value;
  guarded("k-out", () => {
    const r = call(kernelComparison, num("k-n"), num("k-m"), num("k-l"), num("k-seed"));
    $("k-out").textContent = `relative Frobenius error ${r.relative_frobenius.toFixed(4)}, max |error| ${r.max_abs.toFixed(4)}`;
    heatmap($("k-exact"), r.exact, -0.2, 1);
    heatmap($("k-approx"), r.approx, -0.2, 1);
  });
}

function runSimulate() {
  guarded("s-out", () => {
    const r = call(simulate, num("s-n"), num("s-j"), $("s-kind").value, num("s-seed"));
    const flat = r.y.flat();
    const lo = Math.min(...flat), hi = Math.max(...flat);
    $("s-out").textContent = `Y is ${r.y.length} × ${r.y[0].length}, range [${lo.toFixed(2)}, ${hi.toFixed(2)}]`;
    scatter($("s-x"), r.x, r.labels);
    heatmap($("s-y"), r.y, lo, hi);
  });
}

function runFit() {
  $("f-out").textContent = "running...";
  setTimeout(() => guarded("f-out", () => {
    const t0 = performance.now();
    const r = call(fit, num("f-n"), num("f-j"), $("f-kind").value, num("f-m"), num("f-it"), num("f-seed"));
    const secs = ((performance.now() - t0) / 1000).toFixed(1);
    $("f-out").textContent = `affine R²: initialization ${r.r2_initial.toFixed(3)}, posterior ${r.r2_posterior.toFixed(3)} (${secs}s)`;
    scatter($("f-truth"), r.truth, r.labels);
    scatter($("f-init"), r.initial, r.labels);
    scatter($("f-post"), r.posterior, r.labels);
    line($("f-ll"), r.log_likelihood);
  }), 0);
}

await init();
for (const id of ["k-n", "k-m", "k-l", "k-seed"]) $(id).addEventListener("input", runKernel);
$("s-run").addEventListener("click", runSimulate);
$("f-run").addEventListener("click", runFit);
runKernel();
runSimulate();
