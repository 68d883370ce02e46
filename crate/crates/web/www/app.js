import init, { Diagram, cost } from "./pkg/cage_web.js";

const $ = (id) => document.getElementById(id);
const SCALE = 3;
let diagram = null;

function paint(canvas, w, h, rgba) {
  canvas.width = w;
  canvas.height = h;
  canvas.style.width = `${w * SCALE}px`;
  canvas.style.height = `${h * SCALE}px`;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function showValues() {
  for (const out of document.querySelectorAll("output[for]")) {
    out.value = $(out.htmlFor).value;
  }
}

function guarded(f) {
  return () => {
    showValues();
    try {
      f();
      $("error").textContent = "";
    } catch (e) {
      $("error").textContent = e.message ?? String(e);
    }
  };
}

function readCount(el, read, total) {
  el.value = `${read}/${total} labels read`;
  el.className = read === total ? "ok" : "bad";
}

const rebuild = guarded(() => {
  diagram?.free();
  diagram = null;
  diagram = new Diagram($("labels").value);
  paint($("prog"), diagram.width(), diagram.height(), diagram.rgba());
  edges();
  stylize();
});

const edges = guarded(() => {
  if (!diagram) return;
  const v = diagram.edges(+$("sigma").value, +$("low").value, +$("high").value);
  paint($("edges"), diagram.width(), diagram.height(), v.rgba());
  $("edge-count").value = `${v.count()} px (${(100 * v.density()).toFixed(1)}%)`;
  v.free();
});

const stylize = guarded(() => {
  if (!diagram) return;
  const v = diagram.stylize(+$("strength").value, +$("seed").value >>> 0, +$("padding").value, $("mode").value);
  const [w, h] = [diagram.width(), diagram.height()];
  paint($("raw"), w, h, v.raw());
  paint($("mask"), w, h, v.mask());
  paint($("refined"), w, h, v.refined());
  readCount($("raw-read"), v.raw_read(), v.total());
  readCount($("refined-read"), v.refined_read(), v.total());
  $("mask-px").value = `${v.masked_pixels()} px, ${v.masked_intact() ? "byte-identical to the original" : "redrawn"}`;
  v.free();
});

const costs = guarded(() => {
  const c = cost(
    $("price").value,
    $("regen").value,
    $("geometric").checked,
    +$("per-deck").value >>> 0,
    +$("per-week").value >>> 0,
    +$("weeks").value >>> 0,
    +$("teachers").value >>> 0,
  );
  $("c-mult").textContent = `${c.multiplier()}×`;
  $("c-img").textContent = c.per_image_eff();
  $("c-deck").textContent = c.per_deck();
  $("c-teacher").textContent = c.per_teacher_year();
  $("c-school").textContent = c.per_school_year();
  c.free();
});

await init();
$("labels").addEventListener("input", rebuild);
for (const id of ["sigma", "low", "high"]) $(id).addEventListener("input", edges);
for (const id of ["strength", "seed", "padding", "mode"]) $(id).addEventListener("input", stylize);
for (const id of ["price", "regen", "geometric", "per-deck", "per-week", "weeks", "teachers"]) {
  $(id).addEventListener("input", costs);
}
rebuild();
costs();
