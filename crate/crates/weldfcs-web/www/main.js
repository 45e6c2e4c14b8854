import init, { profile_curves, large_deviations, character_ratio } from "./pkg/weldfcs_web.js";

const num = (id) => parseFloat(document.getElementById(id).value);

function plot(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.ys).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...all), Math.max(...all)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const px = (x) => 30 + ((x - x0) / (x1 - x0)) * (w - 40);
  const py = (y) => h - 20 - ((y - y0) / (y1 - y0)) * (h - 30);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(30, py(0)); ctx.lineTo(w - 10, py(0));
  ctx.stroke();
  series.forEach(({ ys, color, label }, k) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.fillText(label, 40 + 90 * k, 12);
  });
  ctx.fillStyle = "#333";
  ctx.fillText(`[${x0.toFixed(2)}, ${x1.toFixed(2)}] x [${y0.toPrecision(3)}, ${y1.toPrecision(3)}]`, 40, h - 4);
}

function call(f, args) {
  try {
    return JSON.parse(f(JSON.stringify(args)));
  } catch (e) {
    alert(e);
    return null;
  }
}

function showProfile() {
  const r = call(profile_curves, { beta_left: num("bl"), beta_right: num("br"), half_width: num("hw"), t: num("t") });
  if (!r) return;
  plot(document.getElementById("profile-plot"), r.x, [
    { ys: r.beta, color: "#c33", label: "beta" },
    { ys: r.xi_plus, color: "#36c", label: "xi+" },
    { ys: r.xi_minus, color: "#393", label: "xi-" },
  ]);
}

function showRates() {
  const r = call(large_deviations, { beta_left: num("bl"), beta_right: num("br"), c: num("c") });
  if (!r) return;
  plot(document.getElementById("xi-plot"), r.lambda, [
    { ys: r.xi.map((z) => z.total[0]), color: "#36c", label: "Re Xi" },
    { ys: r.xi.map((z) => z.total[1]), color: "#c33", label: "Im Xi" },
  ]);
  plot(document.getElementById("rate-plot"), r.sigma, [{ ys: r.rate, color: "#393", label: "I(sigma)" }]);
}

function showCharacter() {
  const model = document.getElementById("model").value;
  const theory = model === "free_boson" ? { model, radius: num("radius") } : { model };
  const t0 = num("tau0");
  const d = num("dtau");
  const r = call(character_ratio, { theory, tau0: [0, t0], tau_hat: [d, t0 + d] });
  if (r) document.getElementById("chi-out").textContent = JSON.stringify(r, null, 2);
}

await init();
document.getElementById("profile").onclick = showProfile;
document.getElementById("rates").onclick = showRates;
document.getElementById("chi").onclick = showCharacter;
showProfile();
showRates();
