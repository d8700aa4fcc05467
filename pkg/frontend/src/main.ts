/** Application wiring: store + stream + render loop.
 *
 * Configuration is limited to the API base URL (?api=... or same
 * origin). Everything on screen is re-rendered from store state after
 * each change; the stream is the only push channel.
 */
import { ApiClient } from "./api.js";
import {
  renderBoard,
  renderPanel,
  renderQueue,
  renderStaleBanner,
  renderStatsBar,
} from "./render.js";
import { Store } from "./store.js";
import { UpdatesStream } from "./stream.js";
import type { Category, ListFilters } from "./types.js";

export function mount(root: HTMLElement, baseUrl = ""): {
  store: Store;
  stream: UpdatesStream;
} {
  const api = new ApiClient(baseUrl);
  const store = new Store(api);
  const filters: ListFilters = {};

  const bannerSlot = document.createElement("div");
  const statsSlot = document.createElement("div");
  const controls = buildControls();
  const boardSlot = document.createElement("div");
  const queueSlot = document.createElement("div");
  const panelSlot = document.createElement("div");
  root.append(bannerSlot, statsSlot, controls.element, boardSlot, queueSlot, panelSlot);

  store.subscribe((state) => {
    bannerSlot.replaceChildren(
      ...(renderStaleBanner(state.stale) ? [renderStaleBanner(state.stale)!] : []),
    );
    statsSlot.replaceChildren(renderStatsBar(state.stats));
    boardSlot.replaceChildren(
      renderBoard(state.rows, (pid) => void store.selectPatient(pid)),
    );
    queueSlot.replaceChildren(
      renderQueue(state.openActions, {
        onAcknowledge: (id) => void store.acknowledge(id),
        onResolve: (id, kind, note) => void store.resolve(id, kind, note),
      }),
    );
    panelSlot.replaceChildren(renderPanel(state.detail));
  });

  controls.onChange((next) => {
    Object.assign(filters, next);
    void store.setFilters({ ...filters });
  });

  const stream = new UpdatesStream(
    (item) => store.onFeedItem(item),
    (status) => store.setConnection(status === "connected"),
    { baseUrl },
  );
  void store.refresh();
  void stream.run();
  return { store, stream };
}

function buildControls(): {
  element: HTMLElement;
  onChange: (cb: (filters: ListFilters) => void) => void;
} {
  const element = document.createElement("div");
  element.className = "controls";
  const search = document.createElement("input");
  search.type = "search";
  search.placeholder = "search patient id / reference";
  const category = document.createElement("select");
  for (const name of ["", "Red", "Orange", "Yellow", "Green"]) {
    const option = document.createElement("option");
    option.value = name;
    option.textContent = name || "all categories";
    category.append(option);
  }
  const overdueOnly = document.createElement("input");
  overdueOnly.type = "checkbox";
  element.append(search, category, overdueOnly);

  let callback: (filters: ListFilters) => void = () => {};
  const fire = () =>
    callback({
      search: search.value || undefined,
      category: (category.value || undefined) as Category | undefined,
      overdue: overdueOnly.checked ? true : undefined,
    });
  search.addEventListener("change", fire);
  category.addEventListener("change", fire);
  overdueOnly.addEventListener("change", fire);
  return { element, onChange: (cb) => (callback = cb) };
}

declare global {
  interface Window {
    commandCentre?: ReturnType<typeof mount>;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const params = new URLSearchParams(window.location.search);
  window.commandCentre = mount(
    document.getElementById("app")!,
    params.get("api") ?? "",
  );
}
