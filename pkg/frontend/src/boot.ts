/** Browser entry point: boots the app against the page's own origin. */

import { bootstrap } from "./main.js";

bootstrap(window.document);
