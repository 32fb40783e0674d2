import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["test/**/*.test.ts"],
    // the loopback suite boots a real host service; it overrides this
    // per test where it needs longer
    testTimeout: 20_000,
    hookTimeout: 60_000,
  },
});
