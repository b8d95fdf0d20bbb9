import init, { targetView, noiseSpectrum, noisyMel } from "./pkg/fcpe_demo.js";

const $ = (id) => document.getElementById(id);

function report(id, fn) {
  const out = $(id);
  try {
    out.classList.remove("err");
    out.textContent = fn();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

function polyline(ctx, xs, ys, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(x, ys[i]) : ctx.moveTo(x, ys[i])));
  ctx.stroke();
}

function drawTarget() {
  const v = targetView(Number($("hz").value));
  const canvas = $("target-plot");
  const ctx = clear(canvas);
  const t = v.target;
  const xs = Array.from(t, (_, i) => (i / (t.length - 1)) * canvas.width);
  const ys = Array.from(t, (p) => canvas.height - 4 - p * (canvas.height - 8));
  polyline(ctx, xs, ys, "#2563eb");
  return `cents ${v.cents.toFixed(3)}  nearest bin ${v.nearestBin}  decoded ${v.decodedHz.toFixed(3)} Hz`;
}

function drawNoise() {
  const s = noiseSpectrum(Number($("beta").value), Number($("noise-seed").value));
  const canvas = $("noise-plot");
  const ctx = clear(canvas);
  const lf = Array.from(s.freqs, Math.log10);
  const db = s.db;
  const [x0, x1] = [lf[0], lf[lf.length - 1]];
  const lo = Math.min(...db);
  const hi = Math.max(...db);
  const xs = lf.map((x) => ((x - x0) / (x1 - x0)) * canvas.width);
  const ys = Array.from(db, (d) => canvas.height - ((d - lo) / (hi - lo)) * canvas.height);
  polyline(ctx, xs, ys, "#7c3aed");
  return `fitted slope ${s.slope.toFixed(2)} dB/decade (50 Hz to 6 kHz)`;
}

function drawMel() {
  const m = noisyMel(Number($("f0").value), Number($("snr").value), Number($("mel-beta").value), 0);
  const canvas = $("mel-plot");
  const ctx = clear(canvas);
  const data = m.data;
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of data) {
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }
  const img = ctx.createImageData(m.frames, m.nMels);
  for (let t = 0; t < m.frames; t++) {
    for (let k = 0; k < m.nMels; k++) {
      const level = Math.round((255 * (data[t * m.nMels + k] - lo)) / (hi - lo || 1));
      const at = 4 * ((m.nMels - 1 - k) * m.frames + t);
      img.data.set([level, level * 0.6, 255 - level, 255], at);
    }
  }
  const scratch = new OffscreenCanvas(m.frames, m.nMels);
  scratch.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(scratch, 0, 0, canvas.width, canvas.height);
  return `${m.frames} frames x ${m.nMels} mel bands, measured SNR ${m.measuredSnrDb.toFixed(3)} dB`;
}

await init();
$("target-run").onclick = () => report("target-out", drawTarget);
$("noise-run").onclick = () => report("noise-out", drawNoise);
$("mel-run").onclick = () => report("mel-out", drawMel);
report("target-out", drawTarget);
