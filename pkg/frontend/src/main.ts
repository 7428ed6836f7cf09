import { ApiClient } from "./api.js";
import { createConsole } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8080";
const mount = document.getElementById("bnqa-root");
if (mount) {
  const app = createConsole(mount, new ApiClient(base));
  void app.refreshContexts();
}
