/**
 * Canvas editor wiring: load an image, paint/erase the object mask, drag a
 * displacement vector (live outline, committed on drop), submit, watch
 * previews, and promote history items back to the source slot.
 */
import { ApiClient } from "./api.js";
import { MaskRaster } from "./mask.js";
import { EditSession, type JobView } from "./session.js";

type Tool = "paint" | "erase" | "drag";

export function mountEditor(root: HTMLElement, baseUrl = ""): EditSession {
  const client = new ApiClient(baseUrl || window.location.origin);
  const session = new EditSession(client);

  root.innerHTML = `
    <div class="toolbar">
      <input type="file" id="pm-file" accept="image/*">
      <select id="pm-task">
        <option value="move">move</option>
        <option value="resize">resize</option>
        <option value="paste">paste</option>
      </select>
      <select id="pm-tool">
        <option value="paint">paint mask</option>
        <option value="erase">erase</option>
        <option value="drag">drag object</option>
      </select>
      <label>brush <input type="range" id="pm-brush" min="2" max="40" value="10"></label>
      <label>scale <input type="number" id="pm-scale" min="0.1" step="0.1" value="1.0"></label>
      <button id="pm-submit" disabled>submit edit</button>
      <span id="pm-status"></span>
    </div>
    <canvas id="pm-canvas"></canvas>
    <div id="pm-error" class="error"></div>
    <div id="pm-history" class="history"></div>
  `;

  const canvas = root.querySelector<HTMLCanvasElement>("#pm-canvas")!;
  const ctx = canvas.getContext("2d")!;
  const fileInput = root.querySelector<HTMLInputElement>("#pm-file")!;
  const taskSelect = root.querySelector<HTMLSelectElement>("#pm-task")!;
  const toolSelect = root.querySelector<HTMLSelectElement>("#pm-tool")!;
  const brushInput = root.querySelector<HTMLInputElement>("#pm-brush")!;
  const scaleInput = root.querySelector<HTMLInputElement>("#pm-scale")!;
  const submitButton = root.querySelector<HTMLButtonElement>("#pm-submit")!;
  const statusSpan = root.querySelector<HTMLSpanElement>("#pm-status")!;
  const errorDiv = root.querySelector<HTMLDivElement>("#pm-error")!;
  const historyDiv = root.querySelector<HTMLDivElement>("#pm-history")!;

  let baseImage: HTMLImageElement | null = null;
  let previewImage: HTMLImageElement | null = null;
  let painting = false;
  let dragStart: { x: number; y: number } | null = null;
  let dragDelta: { dx: number; dy: number } = { dx: 0, dy: 0 };

  function redraw(): void {
    if (!baseImage) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(previewImage ?? baseImage, 0, 0);
    if (session.mask && !session.mask.isEmpty()) {
      const overlay = ctx.createImageData(canvas.width, canvas.height);
      const mask = session.mask;
      const live = dragStart !== null;
      for (let y = 0; y < mask.height; y++) {
        for (let x = 0; x < mask.width; x++) {
          if (!mask.get(x, y)) continue;
          const tx = live ? x + dragDelta.dx : x;
          const ty = live ? y + dragDelta.dy : y;
          if (tx < 0 || ty < 0 || tx >= mask.width || ty >= mask.height) continue;
          const o = (ty * mask.width + tx) * 4;
          overlay.data[o] = 64;
          overlay.data[o + 1] = 160;
          overlay.data[o + 2] = 255;
          overlay.data[o + 3] = 110;
        }
      }
      ctx.putImageData(overlay, 0, 0);
    }
    submitButton.disabled = !session.canSubmit();
  }

  function canvasPoint(ev: MouseEvent): { x: number; y: number } {
    const rect = canvas.getBoundingClientRect();
    return {
      x: Math.round(((ev.clientX - rect.left) / rect.width) * canvas.width),
      y: Math.round(((ev.clientY - rect.top) / rect.height) * canvas.height),
    };
  }

  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    const img = new Image();
    img.onload = () => {
      canvas.width = img.width;
      canvas.height = img.height;
      baseImage = img;
      previewImage = null;
      session.loadImage(bytes, img.width, img.height);
      redraw();
    };
    img.src = URL.createObjectURL(file);
  });

  canvas.addEventListener("mousedown", (ev) => {
    if (!session.mask) return;
    const p = canvasPoint(ev);
    const tool = toolSelect.value as Tool;
    if (tool === "drag") {
      dragStart = p;
      dragDelta = { dx: 0, dy: 0 };
    } else {
      painting = true;
      session.mask.paintStroke({
        points: [p], radius: Number(brushInput.value), erase: tool === "erase",
      });
      redraw();
    }
  });

  canvas.addEventListener("mousemove", (ev) => {
    if (!session.mask) return;
    const p = canvasPoint(ev);
    const tool = toolSelect.value as Tool;
    if (tool === "drag" && dragStart) {
      dragDelta = { dx: p.x - dragStart.x, dy: p.y - dragStart.y };
      redraw();
    } else if (painting) {
      session.mask.paintStroke({
        points: [p], radius: Number(brushInput.value), erase: tool === "erase",
      });
      redraw();
    }
  });

  window.addEventListener("mouseup", () => {
    painting = false;
    if (dragStart) {
      session.setDrag(dragDelta.dx, dragDelta.dy); // committed on drop
      statusSpan.textContent = `drag: dx=${session.dx} dy=${session.dy}`;
      dragStart = null;
      redraw();
    }
  });

  function renderHistory(): void {
    historyDiv.innerHTML = "";
    session.history.forEach((item, index) => {
      const entry = document.createElement("div");
      entry.className = "history-item";
      const thumb = new Image();
      thumb.width = 96;
      thumb.src = URL.createObjectURL(new Blob([item.resultPng as BlobPart], { type: "image/png" }));
      const promote = document.createElement("button");
      promote.textContent = "edit this";
      promote.onclick = () => {
        session.promote(index);
        const img = new Image();
        img.onload = () => {
          baseImage = img;
          previewImage = null;
          redraw();
        };
        img.src = thumb.src;
      };
      entry.append(thumb, promote);
      historyDiv.append(entry);
    });
  }

  submitButton.addEventListener("click", async () => {
    errorDiv.textContent = "";
    session.task = taskSelect.value as "move" | "resize" | "paste";
    session.scale = Number(scaleInput.value) || 1.0;
    submitButton.disabled = true;
    try {
      const view = await session.submitAndPoll((update: JobView) => {
        statusSpan.textContent = `${update.state} ${(update.progress * 100).toFixed(0)}%`;
        if (update.previewB64) {
          const img = new Image();
          img.onload = () => {
            previewImage = img;
            redraw();
          };
          img.src = `data:image/png;base64,${update.previewB64}`;
        }
      });
      if (view.state === "failed") {
        errorDiv.textContent = `edit failed: ${view.error ?? "unknown error"}`;
      } else {
        const item = session.history[session.history.length - 1]!;
        const img = new Image();
        img.onload = () => {
          previewImage = img;
          redraw();
        };
        img.src = URL.createObjectURL(new Blob([item.resultPng as BlobPart], { type: "image/png" }));
        renderHistory();
      }
    } catch (err) {
      // the session (image, mask, settings) is preserved on failure
      errorDiv.textContent = err instanceof Error ? err.message : String(err);
    } finally {
      submitButton.disabled = !session.canSubmit();
    }
  });

  return session;
}
