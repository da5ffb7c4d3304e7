from freeprim.cli import main

raise SystemExit(main())
