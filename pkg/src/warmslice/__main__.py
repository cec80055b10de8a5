from warmslice.main import main

raise SystemExit(main())
