/**
 * Application shell: session bootstrap, one experiment at a time,
 * submit-and-advance, zoom overlay, completion and lock.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  GridViewState,
  StorageLike,
  clearMarks,
  fromPayload,
  isComplete,
  markCell,
  restoreMarks,
  saveMarks,
  setView,
  toSubmission,
} from "./state.js";
import {
  renderCompletion,
  renderError,
  renderGrid,
  renderZoomOverlay,
} from "./render.js";
import { ClassCall, Realness, SessionInfo } from "./types.js";

export class App {
  private state: GridViewState | null = null;
  private session: SessionInfo | null = null;
  private overlayImage: string | null = null;

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
    private storage: StorageLike,
  ) {}

  async start(sessionId: string): Promise<void> {
    this.session = await this.api.getSession(sessionId);
    await this.showCurrent();
    this.bind();
  }

  async startNew(studyId: string, raterId: string): Promise<void> {
    this.session = await this.api.createSession(studyId, raterId);
    this.storage.setItem(
      `noduleforge.session.${studyId}.${raterId}`,
      this.session.session_id,
    );
    await this.showCurrent();
    this.bind();
  }

  private async showCurrent(): Promise<void> {
    const session = this.session as SessionInfo;
    if (session.state === "locked" || session.next_experiment === null) {
      this.state = null;
      this.root.innerHTML = renderCompletion(session.state === "locked");
      return;
    }
    const payload = await this.api.getGrid(
      session.session_id,
      session.next_experiment,
    );
    let state = fromPayload(session.session_id, payload);
    state = restoreMarks(state, this.storage);
    this.state = state;
    this.redraw();
  }

  private redraw(): void {
    if (!this.state) return;
    this.root.innerHTML = renderGrid(this.state, this.api.baseUrl);
    if (this.overlayImage) {
      this.root.insertAdjacentHTML(
        "beforeend",
        renderZoomOverlay(this.overlayImage, this.state),
      );
    }
  }

  private bind(): void {
    this.root.addEventListener("click", (ev) => {
      const target = ev.target as HTMLElement;
      if (target.matches("button.mark")) {
        this.onMark(
          target.dataset.cell as string,
          target.dataset.dim as "realness" | "class_call",
          target.dataset.value as Realness | ClassCall,
        );
      } else if (target.id === "submit") {
        void this.onSubmit();
      } else if (target.id === "lock") {
        void this.onLock();
      } else if (target.matches(".cell img")) {
        this.overlayImage = (target as HTMLImageElement).src;
        this.redraw();
      } else if (target.closest("#overlay") && !target.matches("#overlay img")) {
        this.closeOverlay();
      }
    });
    this.root.addEventListener("wheel", (ev) => {
      if (!this.overlayImage || !this.state) return;
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.25 : 0.8;
      this.state = setView(
        this.state,
        this.state.zoom * factor,
        this.state.panX,
        this.state.panY,
      );
      this.redraw();
    });
    let dragging: { x: number; y: number } | null = null;
    this.root.addEventListener("mousedown", (ev) => {
      if (this.overlayImage) dragging = { x: ev.clientX, y: ev.clientY };
    });
    this.root.addEventListener("mousemove", (ev) => {
      if (!dragging || !this.overlayImage || !this.state) return;
      const dx = (ev.clientX - dragging.x) / this.state.zoom;
      const dy = (ev.clientY - dragging.y) / this.state.zoom;
      dragging = { x: ev.clientX, y: ev.clientY };
      this.state = setView(
        this.state,
        this.state.zoom,
        this.state.panX + dx,
        this.state.panY + dy,
      );
      this.redraw();
    });
    this.root.addEventListener("mouseup", () => {
      dragging = null;
    });
    document.addEventListener("keydown", (ev) => {
      if (ev.key === "Escape") this.closeOverlay();
    });
  }

  private closeOverlay(): void {
    if (!this.overlayImage || !this.state) return;
    this.overlayImage = null;
    this.state = setView(this.state, 1, 0, 0);
    this.redraw();
  }

  private onMark(
    cellId: string,
    dimension: "realness" | "class_call",
    value: Realness | ClassCall,
  ): void {
    if (!this.state) return;
    this.state = markCell(this.state, cellId, dimension, value);
    saveMarks(this.state, this.storage);
    this.redraw();
  }

  private async onSubmit(): Promise<void> {
    if (!this.state || !isComplete(this.state)) return;
    const state = this.state;
    try {
      this.session = await this.api.submitResponses(
        state.sessionId,
        state.experimentIndex,
        toSubmission(state),
      );
    } catch (err) {
      // server rejection: show the diagnostic, keep the marks on screen
      this.redraw();
      this.root.insertAdjacentHTML(
        "beforeend",
        renderError(err instanceof ApiError ? err.message : String(err)),
      );
      return;
    }
    clearMarks(state, this.storage);
    this.overlayImage = null;
    await this.showCurrent();
  }

  private async onLock(): Promise<void> {
    if (!this.session) return;
    this.session = await this.api.lockSession(this.session.session_id);
    this.root.innerHTML = renderCompletion(true);
  }
}
