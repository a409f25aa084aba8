import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { MicRecorder } from "./recorder.js";
import { App } from "./views.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
const controller = new SessionController(ApiClientForPage(), window.localStorage);
const app = new App(root, controller, new MicRecorder());
void app.boot();

function ApiClientForPage(): ApiClient {
  // served by the same origin as the API; no configuration needed
  return new ApiClient("");
}
