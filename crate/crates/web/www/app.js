import init, { equilibria, simulate, Trial } from "./pkg/coadapt_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(el, e) {
  el.textContent = String(e && e.message ? e.message : e);
  el.className = "err";
}

function fmt(v) {
  return "(" + v.map((x) => x.toFixed(4)).join(", ") + ")";
}

function solve() {
  const out = $("eq");
  out.className = "";
  try {
    const eq = JSON.parse(equilibria($("version").value));
    out.textContent = [
      `d_H = ${eq.d_H}, d_M = ${eq.d_M}`,
      `Nash         h = ${fmt(eq.nash.h)}  m = ${fmt(eq.nash.m)}`,
      `Stackelberg  h = ${fmt(eq.stackelberg.h)}  m = ${fmt(eq.stackelberg.m)}`,
      `Nash conditions hold: ${eq.nash_conditions_hold}`,
      `Stackelberg conditions hold: ${eq.stackelberg_conditions_hold}`,
    ].join("\n");
  } catch (e) {
    fail(out, e);
  }
}

function runSimulation() {
  const info = $("sim-info");
  info.className = "";
  let res;
  try {
    res = JSON.parse(
      simulate($("version").value, num("sim-alpha"), num("sim-eta"), num("sim-sigma"),
        num("sim-steps"), BigInt(num("sim-seed")), 400),
    );
  } catch (e) {
    fail(info, e);
    return;
  }
  const c = $("sim-plot");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const s = res.states;
  const tMax = s[s.length - 1].t || 1;
  const yMax = Math.max(1e-9, ...s.map((p) => Math.max(p.dist_h_NE, p.dist_h_SE)));
  const x = (t) => 40 + (t / tMax) * (c.width - 50);
  const y = (v) => c.height - 20 - (v / yMax) * (c.height - 30);
  g.strokeStyle = "#999";
  g.strokeRect(40, 10, c.width - 50, c.height - 30);
  g.fillStyle = "#444";
  g.fillText(yMax.toFixed(3), 2, 16);
  g.fillText("0", 28, c.height - 20);
  g.fillText(String(tMax), c.width - 40, c.height - 5);
  for (const [key, color] of [["dist_h_NE", "#1f77b4"], ["dist_h_SE", "#d62728"]]) {
    g.strokeStyle = color;
    g.beginPath();
    s.forEach((p, i) => (i ? g.lineTo(x(p.t), y(p[key])) : g.moveTo(x(p.t), y(p[key]))));
    g.stroke();
  }
  const last = s[s.length - 1];
  info.innerHTML =
    `<span style="color:#1f77b4">|h - h_NE|</span> ${last.dist_h_NE.toFixed(4)}, ` +
    `<span style="color:#d62728">|h - h_SE|</span> ${last.dist_h_SE.toFixed(4)}` +
    (res.diverged_at != null ? `, diverged at step ${res.diverged_at}` : "");
}

let trial = null;
let timer = null;
const cursor = { x: 400, y: 300 };

$("arena").addEventListener("mousemove", (ev) => {
  const r = ev.target.getBoundingClientRect();
  cursor.x = ev.clientX - r.left;
  cursor.y = ev.clientY - r.top;
});

function drawFrame(frame) {
  const c = $("arena");
  const g = c.getContext("2d");
  g.fillStyle = "#fff";
  g.fillRect(0, 0, c.width, c.height);
  if (frame.radius !== undefined) {
    g.fillStyle = "#3a6ea5";
    g.beginPath();
    g.arc(cursor.x, cursor.y, frame.radius, 0, 2 * Math.PI);
    g.fill();
  } else {
    for (const d of frame.dots) {
      const px = cursor.x + (d.dx * c.width) / 2;
      const py = cursor.y - (d.dy * c.height) / 2;
      const v = Math.round(255 * d.shade);
      g.fillStyle = `rgb(${v},${v},${v})`;
      g.strokeStyle = "#888";
      g.beginPath();
      g.arc(px, py, 7, 0, 2 * Math.PI);
      g.fill();
      g.stroke();
    }
  }
}

function play() {
  const info = $("trial-info");
  info.className = "";
  clearInterval(timer);
  const c = $("arena");
  const dims = $("version").value.split("x")[0];
  const sym = Array.from({ length: Number(dims) }, () => (Math.random() < 0.5 ? -1 : 1));
  try {
    trial = new Trial($("version").value, $("mode").value, num("trial-alpha"), new Float64Array(sym));
  } catch (e) {
    fail(info, e);
    return;
  }
  $("upload").disabled = true;
  timer = setInterval(() => {
    let frame;
    try {
      frame = JSON.parse(trial.tick(cursor.x, cursor.y, c.width, c.height));
    } catch (e) {
      clearInterval(timer);
      fail(info, e);
      return;
    }
    drawFrame(frame);
    info.textContent = `t = ${frame.t.toFixed(1)} s, cost = ${frame.cost_H.toFixed(4)}`;
    if (frame.done) {
      clearInterval(timer);
      info.textContent += " (done)";
      $("upload").disabled = false;
    }
  }, 1000 / trial.sample_hz);
}

async function upload() {
  const info = $("trial-info");
  try {
    const r = await fetch("/api/trials", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: trial.record_json($("key").value),
    });
    const body = await r.json();
    info.textContent = r.ok ? `uploaded as trial ${body.trial_id}` : `upload failed: ${r.status} ${body.error || ""}`;
  } catch (e) {
    fail(info, e);
  }
}

await init();
$("solve").onclick = solve;
$("simulate").onclick = runSimulation;
$("play").onclick = play;
$("upload").onclick = upload;
solve();
